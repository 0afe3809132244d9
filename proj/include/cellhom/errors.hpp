#pragma once

#include <stdexcept>
#include <string>

namespace cellhom {

/// Malformed arguments: bad dimensions, out-of-range parameters, non-finite points.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative or eigen solver did not reach its tolerance.
class SolverFailure : public std::runtime_error {
public:
  SolverFailure(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Time integration could not proceed (step size underflow, step budget exhausted).
class IntegratorFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Unknown field or method names, inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace cellhom
