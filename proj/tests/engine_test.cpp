#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "compass/engine.hpp"
#include "oracle/reference_oracle.hpp"
#include "test_support.hpp"

using namespace compass;
using testing_support::worked_group;

namespace {

std::vector<double> rewards(const RewardReport& r) {
  std::vector<double> out;
  for (const auto& t : r.trajectories) out.push_back(t.reward);
  return out;
}

EngineConfig with_mode(Mode m) {
  EngineConfig c;
  c.mode = m;
  return c;
}

}  // namespace

TEST(ScoreGroup, WorkedGroupBuildsIntendedInputs) {
  auto g = worked_group();
  auto r = score_group(g);
  EXPECT_NEAR(r.trajectories[0].confidence, 0.8, 1e-12);
  EXPECT_NEAR(r.trajectories[1].confidence, 0.7, 1e-12);
  EXPECT_NEAR(r.trajectories[2].confidence, 0.9, 1e-12);
  EXPECT_NEAR(r.trajectories[0].r_path, 0.5, 1e-12);
  EXPECT_NEAR(r.trajectories[1].r_path, 0.3, 1e-12);
  EXPECT_NEAR(r.trajectories[2].r_path, 0.6, 1e-12);
}

TEST(ScoreGroup, CompositeWorkedExample) {
  auto r = score_group(worked_group());
  ASSERT_EQ(r.pseudo_label, "A");
  EXPECT_NEAR(*r.s_cred, 0.8889, 1e-4);
  auto R = rewards(r);
  EXPECT_NEAR(R[0], 1.3889, 1e-4);
  EXPECT_NEAR(R[1], 1.1889, 1e-4);
  EXPECT_NEAR(R[2], 0.6, 1e-4);
  EXPECT_TRUE(r.trajectories[0].matches_pseudo_label);
  EXPECT_FALSE(r.trajectories[2].matches_pseudo_label);
  ASSERT_EQ(r.votes.size(), 2u);
  EXPECT_EQ(r.votes[0].supporters, (std::vector<std::string>{"t0", "t1"}));
}

TEST(ScoreGroup, CompositeFromComponentValues) {
  // Confidences [0.8, 0.6, 0.9] are given directly here; 0.6 is below
  // exp(-0.5) and so cannot come from real probabilities.
  PromptGroup g = worked_group();
  std::vector<double> c = {0.8, 0.6, 0.9};
  auto table = build_vote_table(g, c);
  auto label = select_pseudo_label(table);
  auto cred = credibility(g, c, label);
  auto ra = answer_reward(g, label, cred.s_cred);
  const std::vector<double> rp = {0.5, 0.3, 0.6};
  EXPECT_NEAR(ra[0] + rp[0], 1.3889, 1e-4);
  EXPECT_NEAR(ra[1] + rp[1], 1.1889, 1e-4);
  EXPECT_NEAR(ra[2] + rp[2], 0.6, 1e-4);
}

TEST(ScoreGroup, AblationModes) {
  auto g = worked_group();
  auto ttrl = score_group(g, with_mode(Mode::kTtrlMajority));
  EXPECT_EQ(rewards(ttrl), (std::vector<double>{1, 1, 0}));
  EXPECT_FALSE(ttrl.s_cred.has_value());
  EXPECT_NEAR(ttrl.votes[0].s_ccsc, 2.0 / 3.0, 1e-15);

  auto no_cred = score_group(g, with_mode(Mode::kCompassNoCred));
  EXPECT_EQ(no_cred.s_cred, 1.0);
  EXPECT_NEAR(rewards(no_cred)[0], 1.5, 1e-12);
  EXPECT_NEAR(rewards(no_cred)[2], 0.6, 1e-12);

  auto no_dpr = score_group(g, with_mode(Mode::kCompassNoDpr));
  EXPECT_NEAR(rewards(no_dpr)[0], 0.8 / 0.9, 1e-12);
  EXPECT_EQ(rewards(no_dpr)[2], 0.0);
  for (const auto& t : no_dpr.trajectories) EXPECT_EQ(t.r_path, 0.0);
}

TEST(ScoreGroup, NoDprUnanimousIsPureConsensus) {
  PromptGroup g;
  g.prompt_id = "u";
  for (int i = 0; i < 4; ++i) {
    g.trajectories.push_back(testing_support::traj_from_pd("t" + std::to_string(i), {0.3, 0.5}, "A"));
  }
  auto r = score_group(g, with_mode(Mode::kCompassNoDpr));
  EXPECT_EQ(r.s_cred, 1.0);
  EXPECT_EQ(rewards(r), (std::vector<double>{1, 1, 1, 1}));
}

TEST(ScoreGroup, BaselineScorers) {
  PromptGroup g;
  g.prompt_id = "b";
  Trajectory t = testing_support::traj_from_pd("t0", {0.0, 1.0}, "A");
  t.loglik = -2.0;
  g.trajectories.push_back(t);

  auto e = score_group(g, with_mode(Mode::kEntropyOnly));
  EXPECT_NEAR(e.trajectories[0].reward, std::exp(-std::log(2.0) / 2.0), 1e-12);

  auto l = score_group(g, with_mode(Mode::kLikelihoodOnly));
  EXPECT_NEAR(l.trajectories[0].reward, std::exp(-1.0), 1e-12);

  g.trajectories[0].loglik.reset();
  EXPECT_THROW(score_group(g, with_mode(Mode::kLikelihoodOnly)), MissingLoglik);
}

TEST(ScoreGroup, AllUnansweredFallsBackToPathReward) {
  PromptGroup g = worked_group();
  for (auto& t : g.trajectories) t.answer.reset();
  auto r = score_group(g);
  EXPECT_FALSE(r.pseudo_label.has_value());
  EXPECT_FALSE(r.s_cred.has_value());
  EXPECT_TRUE(r.votes.empty());
  EXPECT_NEAR(rewards(r)[0], 0.5, 1e-12);
  EXPECT_NEAR(rewards(r)[1], 0.3, 1e-12);
  EXPECT_NO_THROW(score_group(g, with_mode(Mode::kCompassNoCred)));
  EXPECT_NO_THROW(score_group(g, with_mode(Mode::kEntropyOnly)));
  EXPECT_THROW(score_group(g, with_mode(Mode::kTtrlMajority)), NoAnsweredTrajectories);
  EXPECT_THROW(score_group(g, with_mode(Mode::kCompassNoDpr)), NoAnsweredTrajectories);
}

TEST(ScoreGroup, RejectsNonPositiveEpsilon) {
  EngineConfig c;
  c.advantage_epsilon = 0.0;
  EXPECT_THROW(score_group(worked_group(), c), std::invalid_argument);
}

TEST(ModeNames, RoundTrip) {
  for (auto m : {Mode::kCompass, Mode::kCompassNoCred, Mode::kCompassNoDpr, Mode::kTtrlMajority,
                 Mode::kEntropyOnly, Mode::kLikelihoodOnly}) {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
  EXPECT_FALSE(parse_mode("majority").has_value());
}

TEST(GroupAdvantages, Examples) {
  std::vector<double> r = {1, 0, 1, 0};
  auto a = group_advantages(r, 1e-6);
  const std::vector<double> expect = {1, -1, 1, -1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], expect[i], 1e-5);
  // Oracle agreement including the epsilon term.
  auto o = oracle::advantages(r, 1e-6);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], o[i], 1e-15);

  std::vector<double> flat = {0.1, 0.1, 0.1};
  EXPECT_EQ(group_advantages(flat, 1e-6), (std::vector<double>{0, 0, 0}));
  std::vector<double> one = {2.0};
  EXPECT_EQ(group_advantages(one, 1e-6), std::vector<double>{0.0});
}

TEST(Downsample, KeepsLabelFromFullGroup) {
  std::mt19937_64 rng(3);
  testing_support::GenOptions o;
  o.max_n = 1;
  PromptGroup g;
  g.prompt_id = "ds";
  for (int i = 0; i < 64; ++i) {
    auto t = testing_support::random_trajectory(rng, o, "t" + std::to_string(i));
    t.answer = i < 40 ? "A" : "B";
    g.trajectories.push_back(t);
  }
  EngineConfig full;
  EngineConfig half;
  half.downsample = 32;
  half.seed = 9;
  auto rf = score_group(g, full);
  auto rh = score_group(g, half);
  ASSERT_EQ(rh.trajectories.size(), 32u);
  EXPECT_EQ(rh.pseudo_label, rf.pseudo_label);
  EXPECT_EQ(rh.s_cred, rf.s_cred);

  std::set<std::string> ids;
  for (const auto& t : rh.trajectories) ids.insert(t.traj_id);
  EXPECT_EQ(ids.size(), 32u);
  double sum = 0.0;
  for (const auto& t : rh.trajectories) sum += t.advantage;
  EXPECT_NEAR(sum, 0.0, 1e-9 * 32);

  // Same seed, same subset; different seed, (almost surely) different subset.
  auto again = score_group(g, half);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(again.trajectories[i].traj_id, rh.trajectories[i].traj_id);
  half.seed = 10;
  auto other = score_group(g, half);
  bool differs = false;
  for (std::size_t i = 0; i < 32; ++i) differs |= other.trajectories[i].traj_id != rh.trajectories[i].traj_id;
  EXPECT_TRUE(differs);
}

TEST(EngineProperty, AgreesWithReferenceOracle) {
  std::mt19937_64 rng(101);
  testing_support::GenOptions o;
  o.max_n = 16;
  o.max_t = 64;
  o.max_k = 20;
  for (int i = 0; i < 200; ++i) {
    PromptGroup g = testing_support::random_group(rng, o, /*force_answer=*/false);
    const bool answered = std::any_of(g.trajectories.begin(), g.trajectories.end(),
                                      [](const Trajectory& t) { return t.answer.has_value(); });
    auto r = score_group(g);
    auto ref = oracle::score(testing_support::to_oracle(g));
    ASSERT_EQ(r.pseudo_label, ref.label);
    if (answered) {
      ASSERT_TRUE(testing_support::rel_close(*r.s_cred, ref.s_cred, 1e-9));
    }
    for (const auto& v : r.votes) EXPECT_TRUE(testing_support::rel_close(v.s_ccsc, ref.s_ccsc.at(v.answer), 1e-9));
    for (std::size_t k = 0; k < g.trajectories.size(); ++k) {
      EXPECT_TRUE(testing_support::rel_close(r.trajectories[k].confidence, ref.c[k], 1e-9));
      EXPECT_TRUE(testing_support::rel_close(r.trajectories[k].r_answer, ref.r_answer[k], 1e-9));
      EXPECT_TRUE(testing_support::rel_close(r.trajectories[k].r_path, ref.r_path[k], 1e-9));
      EXPECT_TRUE(testing_support::rel_close(r.trajectories[k].reward, ref.r[k], 1e-9));
    }
  }
}

TEST(EngineProperty, BoundsDeterminismAndZeroMeanAdvantages) {
  std::mt19937_64 rng(202);
  const Mode modes[] = {Mode::kCompass, Mode::kCompassNoCred, Mode::kCompassNoDpr,
                        Mode::kTtrlMajority, Mode::kEntropyOnly, Mode::kLikelihoodOnly};
  for (int i = 0; i < 200; ++i) {
    PromptGroup g = testing_support::random_group(rng);
    for (Mode m : modes) {
      auto r = score_group(g, with_mode(m));
      const double cap = m == Mode::kCompass || m == Mode::kCompassNoCred ? 2.0 : 1.0;
      double adv = 0.0;
      for (const auto& t : r.trajectories) {
        EXPECT_GE(t.reward, 0.0);
        EXPECT_LE(t.reward, cap + 1e-12);
        EXPECT_GE(t.r_answer, 0.0);
        EXPECT_LE(t.r_answer, 1.0);
        EXPECT_GE(t.r_path, 0.0);
        EXPECT_LE(t.r_path, 1.0 + 1e-12);
        adv += t.advantage;
      }
      EXPECT_NEAR(adv, 0.0, 1e-9 * static_cast<double>(r.trajectories.size()));

      auto again = score_group(g, with_mode(m));
      for (std::size_t k = 0; k < r.trajectories.size(); ++k) {
        EXPECT_EQ(again.trajectories[k].reward, r.trajectories[k].reward);
        EXPECT_EQ(again.trajectories[k].advantage, r.trajectories[k].advantage);
      }
    }
  }
}

TEST(EngineProperty, EqualConfidenceReducesToMajority) {
  // Constant PD sequences give every trajectory c = 1; with the path reward
  // removed, compass ranks trajectories exactly as majority voting does.
  std::mt19937_64 rng(303);
  for (int i = 0; i < 200; ++i) {
    PromptGroup g = testing_support::random_group(rng);
    for (auto& t : g.trajectories) t.steps.assign(t.steps.size(), t.steps[0]);
    auto compass_r = score_group(g, with_mode(Mode::kCompassNoDpr));
    auto ttrl_r = score_group(g, with_mode(Mode::kTtrlMajority));
    EXPECT_EQ(compass_r.pseudo_label, ttrl_r.pseudo_label);
    for (std::size_t k = 0; k < g.trajectories.size(); ++k) {
      EXPECT_EQ(compass_r.trajectories[k].reward, ttrl_r.trajectories[k].reward);
    }
  }
}
