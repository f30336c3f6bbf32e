#pragma once

#include <stdexcept>
#include <string>

namespace parapack {

/// Input outside the mathematical domain of an operation (e.g. SOC > 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or inconsistent arguments (degenerate windows, size mismatch).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration or data file that fails parsing or schema validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base for failures of a numerical procedure on otherwise valid input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A time-stepper produced a non-finite state.
class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, double t)
      : NumericalError(what), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class DiagonalizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Riccati/Lyapunov solver did not reach its residual target.
class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace parapack
