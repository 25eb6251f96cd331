#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ranges>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "compass/errors.hpp"
#include "compass/types.hpp"

namespace compass {

struct DynamicsPoint {
  int epoch = 0;
  double pseudo_label_accuracy = 0.0;
  double majority_ratio = 0.0;
  double mean_reward = 0.0;
};

// Mean of per-response correctness indicators.
template <std::ranges::input_range R>
double pass_at_1(const R& correctness) {
  std::size_t hits = 0;
  std::size_t k = 0;
  for (bool ok : correctness) {
    hits += ok ? 1 : 0;
    ++k;
  }
  if (k == 0) throw std::invalid_argument("pass_at_1: empty list");
  return static_cast<double>(hits) / static_cast<double>(k);
}

// Share of answered trajectories that carry the modal answer.
inline double majority_ratio(const PromptGroup& group) {
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t answered = 0;
  std::size_t top = 0;
  for (const auto& t : group.trajectories) {
    if (!t.answer) continue;
    ++answered;
    top = std::max(top, ++counts[*t.answer]);
  }
  if (answered == 0) throw NoAnsweredTrajectories(group.prompt_id);
  return static_cast<double>(top) / static_cast<double>(answered);
}

// An absent pseudo-label never matches.
inline double pseudo_label_accuracy(std::span<const std::optional<std::string>> labels,
                                    std::span<const std::string> truths) {
  if (labels.size() != truths.size()) {
    throw std::invalid_argument("pseudo_label_accuracy: length mismatch");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] && *labels[i] == truths[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace compass
