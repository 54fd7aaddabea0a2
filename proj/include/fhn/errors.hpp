#pragma once

#include <stdexcept>
#include <string>

namespace fhn {

// Grid or array dimensions do not agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A documented precondition on a state object does not hold.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Explicit transport step rejected; required_dt is the largest admissible step.
struct CflViolation : std::runtime_error {
  double required_dt;
  CflViolation(const std::string& msg, double dt) : std::runtime_error(msg), required_dt(dt) {}
};

// Invalid configuration value. field_path points into the JSON config.
struct ConfigError : std::runtime_error {
  std::string field_path;
  ConfigError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), field_path(std::move(path)) {}
};

}  // namespace fhn
