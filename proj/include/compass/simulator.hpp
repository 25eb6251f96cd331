#pragma once

// Desk-scale dynamics simulator. Each prompt has a small set of candidate
// answers and a multinomial policy over them. Sampled responses get synthetic
// decisiveness/entropy traces whose statistics depend on whether the answer
// is correct: correct answers are more decisive and more stable, with the
// class separation scaled by `rho`. Rewards from the engine drive a simple
// logit update, and the loop records label accuracy and consensus
// concentration per epoch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "compass/engine.hpp"
#include "compass/metrics.hpp"
#include "compass/parallel.hpp"
#include "compass/rng.hpp"
#include "compass/types.hpp"

namespace compass::sim {

struct PdParams {
  double mean = 0.5;
  double spread = 0.1;
};

struct EntropyParams {
  double scale = 1.5;  // h = scale * (1 - pd) + noise * z, floored at 0
  double noise = 0.1;
};

struct ClassParams {
  PdParams pd;
  EntropyParams entropy;
};

struct SimConfig {
  std::size_t n_prompts = 64;
  std::size_t n_answers_per_prompt = 4;
  std::size_t samples_per_prompt = 64;
  std::size_t tokens = 64;
  double rho = 0.8;
  ClassParams correct{{0.60, 0.05}, {1.5, 0.10}};
  ClassParams incorrect{{0.45, 0.25}, {1.5, 0.30}};
  double truth_logit_bonus = 0.3;  // initial policy: truth logit offset
  double logit_spread = 0.5;       // initial policy: sd of answer logits
  double p_unanswered = 0.0;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  std::size_t threads = 1;
  EngineConfig engine{};
};

inline void check_config(const SimConfig& c) {
  if (c.n_prompts < 1) throw std::invalid_argument("n_prompts must be >= 1");
  if (c.n_answers_per_prompt < 2) throw std::invalid_argument("n_answers_per_prompt must be >= 2");
  if (c.samples_per_prompt < 1) throw std::invalid_argument("samples_per_prompt must be >= 1");
  if (c.tokens < 1) throw std::invalid_argument("tokens must be >= 1");
  if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) throw std::invalid_argument("rho must be in [0,1]");
  if (!(c.p_unanswered >= 0.0 && c.p_unanswered <= 1.0)) {
    throw std::invalid_argument("p_unanswered must be in [0,1]");
  }
  if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  for (const ClassParams* p : {&c.correct, &c.incorrect}) {
    if (!(p->pd.spread >= 0.0) || !(p->entropy.noise >= 0.0) || !(p->entropy.scale >= 0.0)) {
      throw std::invalid_argument("class spreads and entropy parameters must be >= 0");
    }
  }
}

// Class parameters pulled toward the midpoint of the two classes; rho = 0
// makes correct and incorrect responses identically distributed.
inline ClassParams effective_params(const SimConfig& c, bool correct) {
  const ClassParams& own = correct ? c.correct : c.incorrect;
  const ClassParams& other = correct ? c.incorrect : c.correct;
  auto mix = [&](double a, double b) { return 0.5 * (a + b) + c.rho * 0.5 * (a - b); };
  return {{mix(own.pd.mean, other.pd.mean), mix(own.pd.spread, other.pd.spread)},
          {mix(own.entropy.scale, other.entropy.scale),
           mix(own.entropy.noise, other.entropy.noise)}};
}

struct PromptPolicy {
  std::vector<double> logits;  // log-probabilities, logsumexp = 0
  std::size_t truth = 0;

  std::vector<double> probabilities() const {
    std::vector<double> p(logits.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(logits[k]);
    return p;
  }
};

struct SimState {
  std::vector<PromptPolicy> prompts;
  std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kInitStream = 0x706f6c6963790000ULL;
inline constexpr std::uint64_t kSampleStream = 0x73616d706c650000ULL;

// Every epoch draws prompt i's group from the same stream, so epochs differ
// only through the policy: with a frozen policy the sampled groups repeat.
inline Rng sample_stream(std::uint64_t seed, std::size_t prompt_index) {
  return substream(seed, {kSampleStream, prompt_index});
}

inline std::string answer_key(std::size_t k) { return "a" + std::to_string(k); }

inline std::string prompt_key(std::size_t i) { return "q" + std::to_string(i); }

inline void normalize_logits(std::vector<double>& logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - top);
  const double lse = top + std::log(z);
  for (double& l : logits) l -= lse;
}

inline SimState init_state(const SimConfig& c) {
  check_config(c);
  SimState state;
  state.seed = c.seed;
  state.prompts.reserve(c.n_prompts);
  for (std::size_t i = 0; i < c.n_prompts; ++i) {
    PromptPolicy p;
    Rng rng = substream(c.seed, {kInitStream, i});
    std::uniform_int_distribution<std::size_t> pick(0, c.n_answers_per_prompt - 1);
    p.truth = pick(rng);
    std::normal_distribution<double> z(0.0, 1.0);
    p.logits.resize(c.n_answers_per_prompt);
    for (double& l : p.logits) l = c.logit_spread * z(rng);
    p.logits[p.truth] += c.truth_logit_bonus;
    normalize_logits(p.logits);
    state.prompts.push_back(std::move(p));
  }
  return state;
}

// Synthesizes one response's token trace for the given class.
inline Trajectory synthesize_trajectory(const SimConfig& c, bool correct, Rng& rng) {
  const ClassParams params = effective_params(c, correct);
  std::normal_distribution<double> z(0.0, 1.0);
  Trajectory t;
  t.steps.resize(c.tokens);
  double loglik = 0.0;
  for (auto& step : t.steps) {
    const double pd = std::clamp(params.pd.mean + params.pd.spread * z(rng), 0.0, 1.0);
    const double h =
        std::max(0.0, params.entropy.scale * (1.0 - pd) + params.entropy.noise * z(rng));
    const double top = 0.5 * (1.0 + pd);
    step.probs = {top, 1.0 - top};
    step.full_entropy = h;
    loglik += std::log(top);
  }
  t.loglik = loglik;
  return t;
}

inline PromptGroup sample_group(const SimConfig& c, const PromptPolicy& policy,
                                std::size_t prompt_index, Rng& rng) {
  const auto probs = policy.probabilities();
  std::discrete_distribution<std::size_t> draw(probs.begin(), probs.end());
  std::bernoulli_distribution unanswered(c.p_unanswered);
  PromptGroup g;
  g.prompt_id = prompt_key(prompt_index);
  g.trajectories.reserve(c.samples_per_prompt);
  for (std::size_t j = 0; j < c.samples_per_prompt; ++j) {
    const std::size_t k = draw(rng);
    const bool lost = c.p_unanswered > 0.0 && unanswered(rng);
    Trajectory t = synthesize_trajectory(c, !lost && k == policy.truth, rng);
    t.traj_id = "r" + std::to_string(j);
    if (!lost) t.answer = answer_key(k);
    g.trajectories.push_back(std::move(t));
  }
  return g;
}

inline PromptGroup sample_group(const SimConfig& c, const SimState& state,
                                std::size_t prompt_index) {
  Rng rng = sample_stream(state.seed, prompt_index);
  return sample_group(c, state.prompts.at(prompt_index), prompt_index, rng);
}

// Moves each sampled answer's logit by lr * (mean advantage of its
// trajectories), then renormalizes. Answers absent from the report are left
// alone before renormalization.
inline void policy_update(PromptPolicy& policy, const PromptGroup& group,
                          const RewardReport& report, double learning_rate) {
  std::unordered_map<std::string, const Trajectory*> by_id;
  for (const auto& t : group.trajectories) by_id.emplace(t.traj_id, &t);
  std::vector<double> sum(policy.logits.size(), 0.0);
  std::vector<std::size_t> count(policy.logits.size(), 0);
  for (const auto& row : report.trajectories) {
    const Trajectory* t = by_id.at(row.traj_id);
    if (!t->answer) continue;
    const std::size_t k = std::stoul(t->answer->substr(1));
    sum.at(k) += row.advantage;
    ++count[k];
  }
  bool moved = false;
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (count[k] == 0) continue;
    const double step = learning_rate * sum[k] / static_cast<double>(count[k]);
    if (step != 0.0) {
      policy.logits[k] += step;
      moved = true;
    }
  }
  if (moved) normalize_logits(policy.logits);
}

inline void policy_update(SimState& state, std::size_t prompt_index, const PromptGroup& group,
                          const RewardReport& report, double learning_rate) {
  policy_update(state.prompts.at(prompt_index), group, report, learning_rate);
}

inline std::vector<DynamicsPoint> run_dynamics(const SimConfig& c) {
  SimState state = init_state(c);
  std::vector<DynamicsPoint> series;
  series.reserve(c.epochs);

  struct Slot {
    PromptGroup group;
    std::optional<RewardReport> report;
    std::optional<double> majority;
  };
  std::vector<Slot> slots(c.n_prompts);

  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    EngineConfig engine = c.engine;
    engine.seed = substream(c.seed, {0x6570000000000000ULL, epoch})();

    parallel_for(c.n_prompts, c.threads, [&](std::size_t i) {
      Slot& s = slots[i];
      s.group = sample_group(c, state, i);
      s.report.reset();
      s.majority.reset();
      try {
        s.report = score_group(s.group, engine);
        s.majority = majority_ratio(s.group);
      } catch (const NoAnsweredTrajectories&) {
        // no label and no update for this prompt this epoch
      }
    });

    std::vector<std::optional<std::string>> labels;
    std::vector<std::string> truths;
    double ratio_sum = 0.0;
    std::size_t ratio_n = 0;
    double reward_sum = 0.0;
    std::size_t reward_n = 0;
    for (std::size_t i = 0; i < c.n_prompts; ++i) {
      const Slot& s = slots[i];
      truths.push_back(answer_key(state.prompts[i].truth));
      labels.push_back(s.report ? s.report->pseudo_label : std::nullopt);
      if (s.majority) {
        ratio_sum += *s.majority;
        ++ratio_n;
      }
      if (s.report) {
        for (const auto& row : s.report->trajectories) {
          reward_sum += row.reward;
          ++reward_n;
        }
        policy_update(state, i, s.group, *s.report, c.learning_rate);
      }
    }
    DynamicsPoint pt;
    pt.epoch = static_cast<int>(epoch);
    pt.pseudo_label_accuracy = pseudo_label_accuracy(labels, truths);
    pt.majority_ratio = ratio_n ? ratio_sum / static_cast<double>(ratio_n) : 0.0;
    pt.mean_reward = reward_n ? reward_sum / static_cast<double>(reward_n) : 0.0;
    series.push_back(pt);
  }
  return series;
}

// Paired comparison of confidence-calibrated voting against plain majority
// voting on groups drawn from the initial policy of each prompt.
struct VotingComparison {
  std::size_t prompts = 0;
  std::size_t calibrated_correct = 0;
  std::size_t majority_correct = 0;
  std::size_t only_calibrated = 0;  // discordant: calibrated right, majority wrong
  std::size_t only_majority = 0;
  double z = 0.0;  // McNemar statistic, normal approximation

  double calibrated_accuracy() const {
    return static_cast<double>(calibrated_correct) / static_cast<double>(prompts);
  }
  double majority_accuracy() const {
    return static_cast<double>(majority_correct) / static_cast<double>(prompts);
  }
};

inline VotingComparison compare_voting(const SimConfig& c) {
  SimState state = init_state(c);
  std::vector<int> calibrated(c.n_prompts, 0);
  std::vector<int> majority(c.n_prompts, 0);
  parallel_for(c.n_prompts, c.threads, [&](std::size_t i) {
    const PromptGroup g = sample_group(c, state, i);
    const std::string truth = answer_key(state.prompts[i].truth);
    EngineConfig e = c.engine;
    e.mode = Mode::kCompassNoDpr;
    try {
      calibrated[i] = score_group(g, e).pseudo_label == truth;
      e.mode = Mode::kTtrlMajority;
      majority[i] = score_group(g, e).pseudo_label == truth;
    } catch (const NoAnsweredTrajectories&) {
    }
  });
  VotingComparison out;
  out.prompts = c.n_prompts;
  for (std::size_t i = 0; i < c.n_prompts; ++i) {
    out.calibrated_correct += calibrated[i];
    out.majority_correct += majority[i];
    if (calibrated[i] && !majority[i]) ++out.only_calibrated;
    if (!calibrated[i] && majority[i]) ++out.only_majority;
  }
  const double b = static_cast<double>(out.only_calibrated);
  const double d = static_cast<double>(out.only_majority);
  out.z = (b + d) > 0.0 ? (b - d) / std::sqrt(b + d) : 0.0;
  return out;
}

}  // namespace compass::sim
