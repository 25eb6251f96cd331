#pragma once

// Command-line surface: score, simulate, compare, validate.
// Exit codes: 0 success, 1 data error, 2 usage error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "compass/engine.hpp"
#include "compass/errors.hpp"
#include "compass/io.hpp"
#include "compass/parallel.hpp"
#include "compass/simulator.hpp"

namespace compass::cli {

inline constexpr int kOk = 0;
inline constexpr int kDataError = 1;
inline constexpr int kUsageError = 2;

namespace detail {

// Writes to a file, or to `fallback` when the path is "-".
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw std::runtime_error("cannot open output '" + path + "'");
      out_ = file_.get();
    }
  }
  std::ostream& get() { return *out_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Mode mode_or_throw(const std::string& s) {
  auto m = parse_mode(s);
  if (!m) throw UsageError("unknown mode '" + s + "'");
  return *m;
}

// Reads groups in batches of `threads`, scores each batch in parallel and
// hands reports to `sink` in input order.
template <typename Score, typename Sink>
void for_each_scored(io::GroupReader& reader, std::size_t threads, Score&& score, Sink&& sink) {
  threads = std::max<std::size_t>(1, threads);
  using Result = decltype(score(std::declval<const PromptGroup&>()));
  for (;;) {
    std::vector<PromptGroup> batch;
    while (batch.size() < threads) {
      auto g = reader.next();
      if (!g) break;
      batch.push_back(std::move(*g));
    }
    if (batch.empty()) return;
    std::vector<std::optional<Result>> results(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) { results[i] = score(batch[i]); });
    for (std::size_t i = 0; i < batch.size(); ++i) sink(batch[i], *results[i]);
  }
}

}  // namespace detail

struct ScoreArgs {
  std::string input = "-";
  std::string output = "-";
  std::string csv;
  std::string mode = "compass";
  std::size_t downsample = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double epsilon = 1e-6;
};

inline int cmd_score(const ScoreArgs& a, std::ostream& out) {
  EngineConfig cfg;
  cfg.mode = detail::mode_or_throw(a.mode);
  cfg.downsample = a.downsample;
  cfg.seed = a.seed;
  cfg.advantage_epsilon = a.epsilon;
  if (!(cfg.advantage_epsilon > 0.0)) throw detail::UsageError("--epsilon must be > 0");

  io::InputFile input(a.input);
  io::GroupReader reader(input.stream());
  detail::Output report(a.output, out);
  std::optional<detail::Output> csv;
  if (!a.csv.empty()) {
    csv.emplace(a.csv, out);
    csv->get() << io::kScoreCsvHeader << '\n';
  }
  detail::for_each_scored(
      reader, a.threads, [&](const PromptGroup& g) { return score_group(g, cfg); },
      [&](const PromptGroup&, const RewardReport& r) {
        report.get() << io::report_to_json(r, cfg.mode).dump() << '\n';
        if (csv) io::write_score_csv_row(csv->get(), r);
      });
  return kOk;
}

struct SimulateArgs {
  std::string config;
  std::string csv = "-";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> threads;
  std::optional<double> learning_rate;
  std::optional<double> rho;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  sim::SimConfig c = a.config.empty() ? sim::SimConfig{} : io::load_sim_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.mode) c.engine.mode = detail::mode_or_throw(*a.mode);
  if (a.epochs) c.epochs = *a.epochs;
  if (a.threads) c.threads = *a.threads;
  if (a.learning_rate) c.learning_rate = *a.learning_rate;
  if (a.rho) c.rho = *a.rho;
  sim::check_config(c);
  const auto series = sim::run_dynamics(c);
  detail::Output csv(a.csv, out);
  io::write_dynamics_csv(csv.get(), series);
  return kOk;
}

struct CompareArgs {
  std::string input = "-";
  std::string output = "-";
  std::string mode_a = "compass";
  std::string mode_b = "ttrl_majority";
  std::size_t downsample = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

inline double mean_reward(const RewardReport& r) {
  if (r.trajectories.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : r.trajectories) s += t.reward;
  return s / static_cast<double>(r.trajectories.size());
}

inline int cmd_compare(const CompareArgs& a, std::ostream& out) {
  EngineConfig ca, cb;
  ca.mode = detail::mode_or_throw(a.mode_a);
  cb.mode = detail::mode_or_throw(a.mode_b);
  ca.downsample = cb.downsample = a.downsample;
  ca.seed = cb.seed = a.seed;

  io::InputFile input(a.input);
  io::GroupReader reader(input.stream());
  detail::Output sink(a.output, out);
  using Pair = std::pair<RewardReport, RewardReport>;
  detail::for_each_scored(
      reader, a.threads,
      [&](const PromptGroup& g) { return Pair{score_group(g, ca), score_group(g, cb)}; },
      [&](const PromptGroup&, const Pair& p) {
        const auto& [ra, rb] = p;
        io::json deltas = io::json::array();
        for (std::size_t i = 0; i < ra.trajectories.size(); ++i) {
          deltas.push_back({{"traj_id", ra.trajectories[i].traj_id},
                            {"reward_a", ra.trajectories[i].reward},
                            {"reward_b", rb.trajectories[i].reward},
                            {"delta", ra.trajectories[i].reward - rb.trajectories[i].reward}});
        }
        auto label = [](const RewardReport& r) {
          return r.pseudo_label ? io::json(*r.pseudo_label) : io::json(nullptr);
        };
        io::json j;
        j["prompt_id"] = ra.prompt_id;
        j["mode_a"] = std::string(to_string(ca.mode));
        j["mode_b"] = std::string(to_string(cb.mode));
        j["pseudo_label_a"] = label(ra);
        j["pseudo_label_b"] = label(rb);
        j["labels_agree"] = ra.pseudo_label == rb.pseudo_label;
        j["mean_reward_a"] = mean_reward(ra);
        j["mean_reward_b"] = mean_reward(rb);
        j["mean_reward_delta"] = mean_reward(ra) - mean_reward(rb);
        j["trajectories"] = std::move(deltas);
        sink.get() << j.dump() << '\n';
      });
  return kOk;
}

inline int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  io::InputFile input(path);
  io::GroupReader reader(input.stream(), /*validate=*/false);
  std::size_t groups = 0, trajectories = 0, violations = 0;
  while (auto g = reader.next()) {
    ++groups;
    trajectories += g->trajectories.size();
    for (const auto& v : validate_group(*g)) {
      ++violations;
      err << g->prompt_id << ": " << v.path << ": " << v.message << '\n';
    }
  }
  out << groups << " groups, " << trajectories << " trajectories, " << violations
      << " violations\n";
  return violations == 0 ? kOk : kDataError;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Self-scoring reward engine for label-free RL rollouts"};
  app.require_subcommand(1);

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Score prompt groups from trajectory JSONL");
  s->add_option("--input", score.input, "Trajectory JSONL ('-' for stdin)");
  s->add_option("--output", score.output, "Report JSONL ('-' for stdout)");
  s->add_option("--csv", score.csv, "Per-group summary CSV");
  s->add_option("--mode", score.mode, "Reward mode");
  s->add_option("--downsample", score.downsample, "Trajectories kept per group for training");
  s->add_option("--seed", score.seed, "Downsampling seed");
  s->add_option("--threads", score.threads, "Worker threads")->check(CLI::PositiveNumber);
  s->add_option("--epsilon", score.epsilon, "Advantage epsilon");

  SimulateArgs simulate;
  auto* m = app.add_subcommand("simulate", "Run the training-dynamics simulator");
  m->add_option("--config", simulate.config, "Simulator config JSON")->check(CLI::ExistingFile);
  m->add_option("--csv", simulate.csv, "Dynamics CSV ('-' for stdout)");
  m->add_option("--seed", simulate.seed, "Override seed");
  m->add_option("--mode", simulate.mode, "Override reward mode");
  m->add_option("--epochs", simulate.epochs, "Override epoch count");
  m->add_option("--threads", simulate.threads, "Worker threads")->check(CLI::PositiveNumber);
  m->add_option("--lr", simulate.learning_rate, "Override learning rate");
  m->add_option("--rho", simulate.rho, "Override correctness/decisiveness coupling");

  CompareArgs compare;
  auto* c = app.add_subcommand("compare", "Score one input under two modes and emit deltas");
  c->add_option("--input", compare.input, "Trajectory JSONL ('-' for stdin)");
  c->add_option("--output", compare.output, "Delta JSONL ('-' for stdout)");
  c->add_option("--mode-a", compare.mode_a, "First mode");
  c->add_option("--mode-b", compare.mode_b, "Second mode");
  c->add_option("--downsample", compare.downsample, "Trajectories kept per group");
  c->add_option("--seed", compare.seed, "Downsampling seed");
  c->add_option("--threads", compare.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string validate_input = "-";
  auto* v = app.add_subcommand("validate", "Check trajectory JSONL against the schema");
  v->add_option("--input", validate_input, "Trajectory JSONL ('-' for stdin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*s) return cmd_score(score, out);
    if (*m) return cmd_simulate(simulate, out);
    if (*c) return cmd_compare(compare, out);
    if (*v) return cmd_validate(validate_input, out, err);
  } catch (const detail::UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace compass::cli
