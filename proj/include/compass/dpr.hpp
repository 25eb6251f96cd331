#pragma once

// Decisive path reward: per-step decisiveness weighted by a softmax over the
// per-step entropies, so decisive steps at uncertain positions count most.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "compass/confidence.hpp"
#include "compass/types.hpp"

namespace compass {

struct PathBreakdown {
  std::vector<double> d;
  std::vector<double> h;
  std::vector<double> w;
  double r_path = 0.0;
};

// Entropy in nats. Without a supplied full-distribution entropy, the stored
// candidates plus one bucket holding the unlisted mass are used.
inline double step_entropy(const TokenStep& step) {
  if (step.full_entropy) return *step.full_entropy;
  double mass = 0.0;
  double h = 0.0;
  for (double p : step.probs) {
    mass += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  const double residual = std::max(0.0, 1.0 - mass);
  if (residual > 0.0) h -= residual * std::log(residual);
  return h;
}

// Max-shifted softmax.
inline std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> w(x.size());
  if (x.empty()) return w;
  const double top = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    w[i] = std::exp(x[i] - top);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

inline double weighted_decisiveness(std::span<const double> d, std::span<const double> h) {
  const auto w = softmax(h);
  double r = 0.0;
  for (std::size_t t = 0; t < d.size(); ++t) r += w[t] * d[t];
  return r;
}

inline PathBreakdown path_reward(const Trajectory& traj) {
  PathBreakdown out;
  const std::size_t n = traj.steps.size();
  out.d.reserve(n);
  out.h.reserve(n);
  for (const auto& step : traj.steps) {
    out.d.push_back(pd_topk(step));
    out.h.push_back(step_entropy(step));
  }
  out.w = softmax(out.h);
  for (std::size_t t = 0; t < n; ++t) out.r_path += out.w[t] * out.d[t];
  return out;
}

}  // namespace compass
