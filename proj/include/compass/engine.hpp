#pragma once

// Scores one prompt group end to end: confidences, calibrated vote,
// credibility, answer and path rewards, their sum, and group-relative
// advantages. Also hosts the ablation and baseline reward modes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "compass/confidence.hpp"
#include "compass/dcar.hpp"
#include "compass/dpr.hpp"
#include "compass/errors.hpp"
#include "compass/rng.hpp"
#include "compass/types.hpp"

namespace compass {

enum class Mode {
  kCompass,         // R = S_cred * match + R_path
  kCompassNoCred,   // S_cred pinned to 1
  kCompassNoDpr,    // R_path pinned to 0
  kTtrlMajority,    // unweighted majority label, R = match
  kEntropyOnly,     // R = exp(-mean h)
  kLikelihoodOnly,  // R = exp(loglik / T)
};

inline constexpr std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kCompass: return "compass";
    case Mode::kCompassNoCred: return "compass_no_cred";
    case Mode::kCompassNoDpr: return "compass_no_dpr";
    case Mode::kTtrlMajority: return "ttrl_majority";
    case Mode::kEntropyOnly: return "entropy_only";
    case Mode::kLikelihoodOnly: return "likelihood_only";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::kCompass, Mode::kCompassNoCred, Mode::kCompassNoDpr,
                 Mode::kTtrlMajority, Mode::kEntropyOnly, Mode::kLikelihoodOnly}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

struct EngineConfig {
  Mode mode = Mode::kCompass;
  double advantage_epsilon = 1e-6;
  // Keep this many trajectories for training after labeling on the full
  // group; 0 keeps everything.
  std::size_t downsample = 0;
  std::uint64_t seed = 0;
};

// GRPO-style normalization: (R - mean) / (population std + epsilon).
inline std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
  std::vector<double> out(rewards.size(), 0.0);
  if (rewards.empty()) return out;
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return out;
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / n);
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + epsilon);
  return out;
}

// Indices kept for training, ascending. Seeded by (seed, prompt_id).
inline std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t keep,
                                                   std::uint64_t seed,
                                                   std::string_view prompt_id) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (keep == 0 || keep >= n) return all;
  Rng rng = substream(seed, {stable_hash(prompt_id), 0x64736d70ULL});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(keep);
  std::sort(all.begin(), all.end());
  return all;
}

inline bool mode_requires_label(Mode m) {
  return m == Mode::kTtrlMajority || m == Mode::kCompassNoDpr;
}

inline RewardReport score_group(const PromptGroup& group, const EngineConfig& config = {}) {
  if (!(config.advantage_epsilon > 0.0)) {
    throw std::invalid_argument("advantage_epsilon must be > 0");
  }
  const std::size_t n = group.trajectories.size();
  const Mode mode = config.mode;

  std::vector<double> conf(n);
  for (std::size_t i = 0; i < n; ++i) conf[i] = trajectory_confidence(group.trajectories[i]).c;

  const bool any_answer = std::any_of(group.trajectories.begin(), group.trajectories.end(),
                                      [](const Trajectory& t) { return t.answer.has_value(); });
  if (!any_answer && mode_requires_label(mode)) throw NoAnsweredTrajectories(group.prompt_id);

  RewardReport report;
  report.prompt_id = group.prompt_id;

  if (any_answer) {
    // Majority voting is the calibrated vote with every weight set to one.
    const std::vector<double> unit(n, 1.0);
    const VoteTable table =
        build_vote_table(group, mode == Mode::kTtrlMajority ? std::span<const double>(unit)
                                                            : std::span<const double>(conf));
    report.pseudo_label = select_pseudo_label(table);
    for (const auto& [answer, e] : table.entries) {
      VoteRow row{answer, e.total_confidence, e.s_ccsc, {}};
      for (std::size_t i : e.supporters) row.supporters.push_back(group.trajectories[i].traj_id);
      report.votes.push_back(std::move(row));
    }
    if (mode != Mode::kTtrlMajority) {
      const CredibilityReport cred = credibility(group, conf, *report.pseudo_label);
      report.c_general = cred.c_general;
      report.c_elite = cred.c_elite;
      if (mode == Mode::kCompass || mode == Mode::kCompassNoDpr) report.s_cred = cred.s_cred;
      if (mode == Mode::kCompassNoCred) report.s_cred = 1.0;
    }
  }

  std::vector<double> r_answer(n, 0.0);
  if (report.pseudo_label) {
    const double scale = mode == Mode::kTtrlMajority ? 1.0 : report.s_cred.value_or(0.0);
    if (mode == Mode::kCompass || mode == Mode::kCompassNoCred ||
        mode == Mode::kCompassNoDpr || mode == Mode::kTtrlMajority) {
      r_answer = answer_reward(group, *report.pseudo_label, scale);
    }
  }

  std::vector<double> r_path(n, 0.0);
  if (mode == Mode::kCompass || mode == Mode::kCompassNoCred) {
    for (std::size_t i = 0; i < n; ++i) r_path[i] = path_reward(group.trajectories[i]).r_path;
  }

  std::vector<double> reward(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& t = group.trajectories[i];
    switch (mode) {
      case Mode::kEntropyOnly: {
        double sum = 0.0;
        for (const auto& s : t.steps) sum += step_entropy(s);
        reward[i] = std::exp(-sum / static_cast<double>(t.steps.size()));
        break;
      }
      case Mode::kLikelihoodOnly:
        if (!t.loglik) throw MissingLoglik(t.traj_id);
        reward[i] = std::exp(*t.loglik / static_cast<double>(t.steps.size()));
        break;
      default:
        reward[i] = r_answer[i] + r_path[i];
    }
  }

  const auto keep = downsample_indices(n, config.downsample, config.seed, group.prompt_id);
  std::vector<double> kept_rewards;
  kept_rewards.reserve(keep.size());
  for (std::size_t i : keep) kept_rewards.push_back(reward[i]);
  const auto adv = group_advantages(kept_rewards, config.advantage_epsilon);

  report.trajectories.reserve(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t i = keep[k];
    const Trajectory& t = group.trajectories[i];
    report.trajectories.push_back({t.traj_id, conf[i],
                                   report.pseudo_label && t.answer == report.pseudo_label,
                                   r_answer[i], r_path[i], reward[i], adv[k]});
  }
  return report;
}

}  // namespace compass
