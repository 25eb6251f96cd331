#pragma once

// Dual-calibration answer reward: confidence-weighted voting over answers,
// pseudo-label selection, credibility of the consensus against the single
// most confident response, and the resulting per-trajectory answer reward.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/errors.hpp"
#include "compass/types.hpp"

namespace compass {

struct VoteEntry {
  double total_confidence = 0.0;
  double s_ccsc = 0.0;
  double max_supporter_confidence = 0.0;
  std::vector<std::size_t> supporters;  // trajectory indices, group order
};

struct VoteTable {
  std::map<std::string, VoteEntry> entries;  // keyed by answer, ascending
  double grand_total = 0.0;
};

struct CredibilityReport {
  std::string pseudo_label;
  double c_general = 0.0;
  double c_elite = 0.0;
  double s_cred = 0.0;
};

inline void check_sizes(const PromptGroup& group, std::span<const double> confidences) {
  if (confidences.size() != group.trajectories.size()) {
    throw std::invalid_argument("confidence count does not match trajectory count");
  }
}

// Unanswered trajectories are left out of both the per-answer totals and the
// normalizer, so S_ccsc is a distribution over the candidate answers.
inline VoteTable build_vote_table(const PromptGroup& group,
                                  std::span<const double> confidences) {
  check_sizes(group, confidences);
  VoteTable table;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    const auto& answer = group.trajectories[i].answer;
    if (!answer) continue;
    VoteEntry& e = table.entries[*answer];
    e.total_confidence += confidences[i];
    e.max_supporter_confidence = std::max(e.max_supporter_confidence, confidences[i]);
    e.supporters.push_back(i);
    table.grand_total += confidences[i];
  }
  if (table.entries.empty()) throw NoAnsweredTrajectories(group.prompt_id);
  for (auto& [key, e] : table.entries) e.s_ccsc = e.total_confidence / table.grand_total;
  return table;
}

// Argmax of the calibrated score. Exact ties go to the answer whose strongest
// supporter is more confident, then to the lexicographically smallest key.
inline std::string select_pseudo_label(const VoteTable& table) {
  if (table.entries.empty()) {
    throw std::invalid_argument("select_pseudo_label: empty vote table");
  }
  auto best = table.entries.begin();
  for (auto it = std::next(best); it != table.entries.end(); ++it) {
    const VoteEntry& a = it->second;
    const VoteEntry& b = best->second;
    if (a.total_confidence > b.total_confidence ||
        (a.total_confidence == b.total_confidence &&
         a.max_supporter_confidence > b.max_supporter_confidence)) {
      best = it;
    }
  }
  return best->first;
}

inline CredibilityReport credibility(const PromptGroup& group,
                                     std::span<const double> confidences,
                                     const std::string& pseudo_label) {
  check_sizes(group, confidences);
  std::optional<double> general;
  std::optional<double> elite;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    const auto& answer = group.trajectories[i].answer;
    if (!answer) continue;
    const double c = confidences[i];
    elite = elite ? std::max(*elite, c) : c;
    if (*answer == pseudo_label) general = general ? std::max(*general, c) : c;
  }
  if (!general) {
    throw std::invalid_argument("credibility: pseudo-label '" + pseudo_label +
                                "' has no supporters");
  }
  return {pseudo_label, *general, *elite, *general / *elite};
}

inline std::vector<double> answer_reward(const PromptGroup& group,
                                         const std::string& pseudo_label,
                                         double s_cred) {
  std::vector<double> r;
  r.reserve(group.trajectories.size());
  for (const auto& t : group.trajectories) {
    r.push_back(t.answer && *t.answer == pseudo_label ? s_cred : 0.0);
  }
  return r;
}

}  // namespace compass
