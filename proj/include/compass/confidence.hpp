#pragma once

// Per-step decisiveness (top-1 minus top-2 probability) and the trajectory
// confidence derived from how stable that decisiveness is over generation.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "compass/types.hpp"

namespace compass {

struct ConfidenceBreakdown {
  std::vector<double> pd_sequence;
  double pd_std = 0.0;
  double c = 1.0;
};

inline double pd_topk(const TokenStep& step) {
  if (step.probs.size() < 2) {
    throw std::invalid_argument("pd_topk: step has K < 2");
  }
  return step.probs[0] - step.probs[1];
}

// Population standard deviation (divide by n); zero for n <= 1.
inline double population_std(std::span<const double> xs) {
  if (xs.size() <= 1) return 0.0;
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs[0]; })) return 0.0;
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n);
}

inline double confidence_from_pd(std::span<const double> pd) {
  return std::exp(-population_std(pd));
}

inline ConfidenceBreakdown trajectory_confidence(const Trajectory& traj) {
  ConfidenceBreakdown out;
  out.pd_sequence.reserve(traj.steps.size());
  for (const auto& step : traj.steps) out.pd_sequence.push_back(pd_topk(step));
  out.pd_std = population_std(out.pd_sequence);
  out.c = std::exp(-out.pd_std);
  return out;
}

}  // namespace compass
