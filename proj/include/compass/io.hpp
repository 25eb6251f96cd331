#pragma once

// Wire formats: trajectory JSONL in, report JSONL and CSV out, JSON simulator
// config. Reading is two-pass over a seekable stream: the first pass indexes
// line offsets by prompt_id, the second materializes one group at a time, so
// memory tracks the largest group rather than the file.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "compass/engine.hpp"
#include "compass/errors.hpp"
#include "compass/metrics.hpp"
#include "compass/simulator.hpp"
#include "compass/types.hpp"

namespace compass::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Trajectory records

namespace detail {

// SAX consumer that only remembers the top-level "prompt_id" string.
class PromptIdSax : public nlohmann::json_sax<json> {
 public:
  std::optional<std::string> prompt_id;
  bool top_is_object = false;
  std::string error;

  bool null() override { return value(); }
  bool boolean(bool) override { return value(); }
  bool number_integer(number_integer_t) override { return value(); }
  bool number_unsigned(number_unsigned_t) override { return value(); }
  bool number_float(number_float_t, const string_t&) override { return value(); }
  bool string(string_t& v) override {
    if (depth_ == 1 && want_) prompt_id = v;
    return value();
  }
  bool binary(binary_t&) override { return value(); }
  bool start_object(std::size_t) override {
    if (depth_ == 0) top_is_object = true;
    want_ = false;
    ++depth_;
    return true;
  }
  bool key(string_t& k) override {
    want_ = depth_ == 1 && k == "prompt_id";
    return true;
  }
  bool end_object() override {
    --depth_;
    return true;
  }
  bool start_array(std::size_t) override {
    want_ = false;
    ++depth_;
    return true;
  }
  bool end_array() override {
    --depth_;
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& ex) override {
    error = ex.what();
    return false;
  }

 private:
  bool value() {
    want_ = false;
    return true;
  }
  int depth_ = 0;
  bool want_ = false;
};

inline double number_or_throw(const json& v, std::size_t line, const char* what) {
  if (!v.is_number()) throw ParseError(line, std::string(what) + " must be a number");
  return v.get<double>();
}

}  // namespace detail

struct Record {
  std::string prompt_id;
  Trajectory trajectory;
};

inline Record parse_record(const std::string& text, std::size_t line) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(line, "malformed JSON");
  if (!j.is_object()) throw ParseError(line, "record must be a JSON object");

  Record rec;
  auto pid = j.find("prompt_id");
  if (pid == j.end() || !pid->is_string()) throw ParseError(line, "prompt_id must be a string");
  rec.prompt_id = pid->get<std::string>();

  Trajectory& t = rec.trajectory;
  auto tid = j.find("traj_id");
  if (tid == j.end() || !tid->is_string()) throw ParseError(line, "traj_id must be a string");
  t.traj_id = tid->get<std::string>();

  if (auto a = j.find("answer"); a != j.end() && !a->is_null()) {
    if (!a->is_string()) throw ParseError(line, "answer must be a string or null");
    t.answer = a->get<std::string>();
  }
  if (auto l = j.find("loglik"); l != j.end() && !l->is_null()) {
    t.loglik = detail::number_or_throw(*l, line, "loglik");
  }

  auto steps = j.find("steps");
  if (steps == j.end() || !steps->is_array()) throw ParseError(line, "steps must be an array");
  t.steps.reserve(steps->size());
  for (const auto& s : *steps) {
    if (!s.is_object()) throw ParseError(line, "step must be an object");
    auto p = s.find("p");
    if (p == s.end() || !p->is_array()) throw ParseError(line, "step.p must be an array");
    TokenStep step;
    step.probs.reserve(p->size());
    for (const auto& v : *p) step.probs.push_back(detail::number_or_throw(v, line, "step.p[]"));
    if (auto h = s.find("h"); h != s.end() && !h->is_null()) {
      step.full_entropy = detail::number_or_throw(*h, line, "step.h");
    }
    t.steps.push_back(std::move(step));
  }
  return rec;
}

inline json record_to_json(const std::string& prompt_id, const Trajectory& t) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    json step = {{"p", s.probs}};
    step["h"] = s.full_entropy ? json(*s.full_entropy) : json(nullptr);
    steps.push_back(std::move(step));
  }
  json j;
  j["prompt_id"] = prompt_id;
  j["traj_id"] = t.traj_id;
  j["answer"] = t.answer ? json(*t.answer) : json(nullptr);
  j["loglik"] = t.loglik ? json(*t.loglik) : json(nullptr);
  j["steps"] = std::move(steps);
  return j;
}

inline void write_group(std::ostream& out, const PromptGroup& g) {
  for (const auto& t : g.trajectories) out << record_to_json(g.prompt_id, t).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Streaming group reader

class GroupReader {
 public:
  // `in` must be seekable and outlive the reader. With `validate` set, each
  // group is checked before it is returned and ValidationError is thrown on
  // the first invalid one.
  explicit GroupReader(std::istream& in, bool validate = true) : in_(in), validate_(validate) {
    index();
  }

  std::size_t group_count() const { return groups_.size(); }

  std::optional<PromptGroup> next() {
    if (cursor_ >= groups_.size()) return std::nullopt;
    const Entry& e = groups_[cursor_++];
    PromptGroup g;
    g.prompt_id = e.prompt_id;
    g.trajectories.reserve(e.lines.size());
    std::string text;
    for (const auto& [offset, line] : e.lines) {
      in_.clear();
      in_.seekg(static_cast<std::streamoff>(offset));
      std::getline(in_, text);
      g.trajectories.push_back(parse_record(text, line).trajectory);
    }
    if (validate_) {
      auto v = validate_group(g);
      if (!v.empty()) throw ValidationError(g.prompt_id, std::move(v));
    }
    return g;
  }

 private:
  struct Entry {
    std::string prompt_id;
    std::vector<std::pair<std::uint64_t, std::size_t>> lines;  // (offset, 1-based line)
  };

  static bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
  }

  void index() {
    std::unordered_map<std::string, std::size_t> slot;
    std::string text;
    std::uint64_t offset = 0;
    std::size_t line = 0;
    while (std::getline(in_, text)) {
      ++line;
      const std::uint64_t here = offset;
      offset += text.size() + 1;
      if (blank(text)) continue;
      detail::PromptIdSax sax;
      if (!json::sax_parse(text, &sax)) {
        throw ParseError(line, "malformed JSON: " + sax.error);
      }
      if (!sax.top_is_object) throw ParseError(line, "record must be a JSON object");
      if (!sax.prompt_id) throw ParseError(line, "prompt_id must be a string");
      auto [it, fresh] = slot.try_emplace(*sax.prompt_id, groups_.size());
      if (fresh) groups_.push_back({*sax.prompt_id, {}});
      groups_[it->second].lines.emplace_back(here, line);
    }
    in_.clear();
  }

  std::istream& in_;
  bool validate_;
  std::vector<Entry> groups_;
  std::size_t cursor_ = 0;
};

inline std::vector<PromptGroup> read_groups(std::istream& in, bool validate = true) {
  GroupReader reader(in, validate);
  std::vector<PromptGroup> out;
  while (auto g = reader.next()) out.push_back(std::move(*g));
  return out;
}

// Opens a path for reading. Stdin ("-") and other non-seekable inputs such as
// pipes are spooled into a temporary file first so the reader can seek.
class InputFile {
 public:
  explicit InputFile(const std::string& path) {
    std::error_code ec;
    if (path == "-") {
      spool(std::cin);
    } else if (std::filesystem::exists(path, ec) && !std::filesystem::is_regular_file(path, ec)) {
      std::ifstream src(path, std::ios::binary);
      if (!src) throw std::runtime_error("cannot open input '" + path + "'");
      spool(src);
    } else {
      stream_.open(path, std::ios::binary);
    }
    if (!stream_) throw std::runtime_error("cannot open input '" + path + "'");
  }
  ~InputFile() {
    stream_.close();
    if (!spool_.empty()) {
      std::error_code ec;
      std::filesystem::remove(spool_, ec);
    }
  }
  InputFile(const InputFile&) = delete;
  InputFile& operator=(const InputFile&) = delete;

  std::istream& stream() { return stream_; }

 private:
  void spool(std::istream& src) {
    std::random_device rd;
    spool_ = std::filesystem::temp_directory_path() /
             ("compass-input-" + std::to_string(rd()) + ".jsonl");
    {
      std::ofstream out(spool_, std::ios::binary);
      out << src.rdbuf();
    }
    stream_.open(spool_, std::ios::binary);
  }

  std::filesystem::path spool_;
  std::ifstream stream_;
};

// ---------------------------------------------------------------------------
// Reports

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json report_to_json(const RewardReport& r, Mode mode) {
  json votes = json::array();
  for (const auto& v : r.votes) {
    votes.push_back({{"answer", v.answer},
                     {"total_confidence", v.total_confidence},
                     {"s_ccsc", v.s_ccsc},
                     {"supporters", v.supporters}});
  }
  json rows = json::array();
  for (const auto& t : r.trajectories) {
    rows.push_back({{"traj_id", t.traj_id},
                    {"confidence", t.confidence},
                    {"matches_pseudo_label", t.matches_pseudo_label},
                    {"r_answer", t.r_answer},
                    {"r_path", t.r_path},
                    {"reward", t.reward},
                    {"advantage", t.advantage}});
  }
  json j;
  j["prompt_id"] = r.prompt_id;
  j["mode"] = std::string(to_string(mode));
  j["pseudo_label"] = r.pseudo_label ? json(*r.pseudo_label) : json(nullptr);
  j["s_cred"] = optional_json(r.s_cred);
  j["c_general"] = optional_json(r.c_general);
  j["c_elite"] = optional_json(r.c_elite);
  j["votes"] = std::move(votes);
  j["trajectories"] = std::move(rows);
  return j;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Quotes a CSV field when it contains a separator, quote or newline.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline constexpr const char* kScoreCsvHeader = "prompt_id,n,pseudo_label,s_cred,mean_reward";

inline void write_score_csv_row(std::ostream& out, const RewardReport& r) {
  double sum = 0.0;
  for (const auto& t : r.trajectories) sum += t.reward;
  const double mean = r.trajectories.empty() ? 0.0 : sum / static_cast<double>(r.trajectories.size());
  out << csv_field(r.prompt_id) << ',' << r.trajectories.size() << ','
      << (r.pseudo_label ? csv_field(*r.pseudo_label) : std::string()) << ','
      << (r.s_cred ? format_double(*r.s_cred) : std::string()) << ',' << format_double(mean)
      << '\n';
}

inline constexpr const char* kDynamicsCsvHeader =
    "epoch,pseudo_label_accuracy,majority_ratio,mean_reward";

inline void write_dynamics_csv(std::ostream& out, const std::vector<DynamicsPoint>& series) {
  out << kDynamicsCsvHeader << '\n';
  for (const auto& p : series) {
    out << p.epoch << ',' << format_double(p.pseudo_label_accuracy) << ','
        << format_double(p.majority_ratio) << ',' << format_double(p.mean_reward) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Simulator config

namespace detail {

inline void read_class(const json& j, const char* key, sim::ClassParams& pd_out, bool pd) {
  if (!j.contains(key)) return;
  const json& c = j.at(key);
  if (pd) {
    pd_out.pd.mean = c.value("mean", pd_out.pd.mean);
    pd_out.pd.spread = c.value("spread", pd_out.pd.spread);
  } else {
    pd_out.entropy.scale = c.value("scale", pd_out.entropy.scale);
    pd_out.entropy.noise = c.value("noise", pd_out.entropy.noise);
  }
}

}  // namespace detail

// Unknown keys are rejected so typos do not silently fall back to defaults.
inline sim::SimConfig parse_sim_config(const json& j) {
  static const std::vector<std::string> known = {
      "n_prompts",      "n_answers_per_prompt", "samples_per_prompt", "N",
      "tokens",         "T",                    "rho",                "pd_params",
      "entropy_params", "truth_logit_bonus",    "logit_spread",       "p_unanswered",
      "learning_rate",  "seed",                 "epochs",             "threads",
      "mode",           "advantage_epsilon",    "downsample"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::invalid_argument("unknown config key '" + k + "'");
    }
  }
  sim::SimConfig c;
  try {
    c.n_prompts = j.value("n_prompts", c.n_prompts);
    c.n_answers_per_prompt = j.value("n_answers_per_prompt", c.n_answers_per_prompt);
    c.samples_per_prompt = j.value("samples_per_prompt", j.value("N", c.samples_per_prompt));
    c.tokens = j.value("tokens", j.value("T", c.tokens));
    c.rho = j.value("rho", c.rho);
    if (j.contains("pd_params")) {
      detail::read_class(j["pd_params"], "correct", c.correct, true);
      detail::read_class(j["pd_params"], "incorrect", c.incorrect, true);
    }
    if (j.contains("entropy_params")) {
      detail::read_class(j["entropy_params"], "correct", c.correct, false);
      detail::read_class(j["entropy_params"], "incorrect", c.incorrect, false);
    }
    c.truth_logit_bonus = j.value("truth_logit_bonus", c.truth_logit_bonus);
    c.logit_spread = j.value("logit_spread", c.logit_spread);
    c.p_unanswered = j.value("p_unanswered", c.p_unanswered);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.threads = j.value("threads", c.threads);
    c.engine.advantage_epsilon = j.value("advantage_epsilon", c.engine.advantage_epsilon);
    c.engine.downsample = j.value("downsample", c.engine.downsample);
    if (j.contains("mode")) {
      auto m = parse_mode(j["mode"].get<std::string>());
      if (!m) throw std::invalid_argument("unknown mode '" + j["mode"].get<std::string>() + "'");
      c.engine.mode = *m;
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  sim::check_config(c);
  return c;
}

inline sim::SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("config '" + path + "' is not valid JSON");
  return parse_sim_config(j);
}

}  // namespace compass::io
