#pragma once

// Data model shared by every stage of the scorer: token steps, trajectories,
// prompt groups, and the reward report produced for a group.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace compass {

// One generation position. `probs` holds the stored top-k candidate
// probabilities, largest first. `full_entropy` (nats) is set when the producer
// had access to the whole next-token distribution.
struct TokenStep {
  std::vector<double> probs;
  std::optional<double> full_entropy;
};

struct Trajectory {
  std::string traj_id;
  std::vector<TokenStep> steps;
  std::optional<std::string> answer;  // absent: no parseable final answer
  std::optional<double> loglik;       // nats, used by the likelihood baseline
};

struct PromptGroup {
  std::string prompt_id;
  std::vector<Trajectory> trajectories;
};

struct TrajectoryReward {
  std::string traj_id;
  double confidence = 0.0;
  bool matches_pseudo_label = false;
  double r_answer = 0.0;
  double r_path = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
};

struct VoteRow {
  std::string answer;
  double total_confidence = 0.0;
  double s_ccsc = 0.0;
  std::vector<std::string> supporters;
};

struct RewardReport {
  std::string prompt_id;
  std::optional<std::string> pseudo_label;
  std::optional<double> s_cred;
  std::optional<double> c_general;
  std::optional<double> c_elite;
  std::vector<VoteRow> votes;  // sorted by answer key
  std::vector<TrajectoryReward> trajectories;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string path;
  std::string message;
};

inline constexpr double kProbSumSlack = 1e-9;

inline void validate_step(const TokenStep& step, const std::string& path,
                          std::vector<Violation>& out) {
  const auto& p = step.probs;
  if (p.size() < 2) {
    out.push_back({path + ".probs", "K < 2"});
  }
  double sum = 0.0;
  bool range_ok = true;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) range_ok = false;
    sum += v;
  }
  if (!range_ok) {
    out.push_back({path + ".probs", "probability outside [0,1]"});
  }
  for (std::size_t j = 1; j < p.size(); ++j) {
    if (p[j] > p[j - 1]) {
      out.push_back({path + ".probs", "probs not sorted descending"});
      break;
    }
  }
  if (range_ok && sum > 1.0 + kProbSumSlack) {
    out.push_back({path + ".probs", "probs sum exceeds 1"});
  }
  if (step.full_entropy &&
      (!std::isfinite(*step.full_entropy) || *step.full_entropy < 0.0)) {
    out.push_back({path + ".full_entropy", "entropy must be finite and >= 0"});
  }
}

// Returns every invariant violation in the group; empty means valid.
inline std::vector<Violation> validate_group(const PromptGroup& group) {
  std::vector<Violation> out;
  if (group.trajectories.empty()) {
    out.push_back({"trajectories", "N < 1"});
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
    const Trajectory& t = group.trajectories[i];
    const std::string tp = "trajectories[" + std::to_string(i) + "]";
    if (!seen.insert(t.traj_id).second) {
      out.push_back({tp + ".traj_id", "duplicate traj_id '" + t.traj_id + "'"});
    }
    if (t.steps.empty()) {
      out.push_back({tp + ".steps", "T < 1"});
    }
    if (t.loglik && !std::isfinite(*t.loglik)) {
      out.push_back({tp + ".loglik", "loglik must be finite"});
    }
    for (std::size_t s = 0; s < t.steps.size(); ++s) {
      validate_step(t.steps[s], tp + ".steps[" + std::to_string(s) + "]", out);
    }
  }
  return out;
}

}  // namespace compass
