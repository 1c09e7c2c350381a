#pragma once

#include <stdexcept>
#include <string>

namespace adq {

// Caller broke a documented precondition (bad geometry, malformed trace,
// out-of-range argument, stepping a finished episode).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration parsed but failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver produced a non-finite coordinate; carries the offending substep.
class SolverInstabilityError : public std::runtime_error {
 public:
  SolverInstabilityError(const std::string& what, int substep)
      : std::runtime_error(what + " (substep " + std::to_string(substep) + ")"),
        substep_(substep) {}
  int substep() const { return substep_; }

 private:
  int substep_;
};

// Episode initialization failed even after the one allowed reseed.
class EpisodeInitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adq
