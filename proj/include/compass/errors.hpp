#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/types.hpp"

namespace compass {

// Every answer in the group is absent, so no pseudo-label can be formed.
class NoAnsweredTrajectories : public std::runtime_error {
 public:
  explicit NoAnsweredTrajectories(const std::string& prompt_id)
      : std::runtime_error("no answered trajectories in group '" + prompt_id + "'"),
        prompt_id_(prompt_id) {}
  const std::string& prompt_id() const noexcept { return prompt_id_; }

 private:
  std::string prompt_id_;
};

class MissingLoglik : public std::runtime_error {
 public:
  explicit MissingLoglik(const std::string& traj_id)
      : std::runtime_error("trajectory '" + traj_id + "' has no loglik"),
        traj_id_(traj_id) {}
  const std::string& traj_id() const noexcept { return traj_id_; }

 private:
  std::string traj_id_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string prompt_id, std::vector<Violation> violations)
      : std::runtime_error(format(prompt_id, violations)),
        prompt_id_(std::move(prompt_id)),
        violations_(std::move(violations)) {}

  const std::string& prompt_id() const noexcept { return prompt_id_; }
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string format(const std::string& id, const std::vector<Violation>& v) {
    std::string msg = "group '" + id + "' invalid:";
    for (const auto& x : v) msg += " [" + x.path + ": " + x.message + "]";
    return msg;
  }

  std::string prompt_id_;
  std::vector<Violation> violations_;
};

}  // namespace compass
