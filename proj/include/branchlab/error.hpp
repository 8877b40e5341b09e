#pragma once

#include <stdexcept>
#include <string>

namespace branchlab {

/// Base of every error raised by the library. `exit_code()` follows the CLI
/// contract: 1 domain/assumption violation, 2 input parse error,
/// 3 convergence/stability failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Non-finite or otherwise unusable numeric input.
class NumericInputError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the set where the operation is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A structural requirement (C_psi membership, kernel assumption) failed.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Trajectory too short for the requested Laplace-transform tail.
class HorizonError : public Error {
 public:
  HorizonError(const std::string& what, double required_horizon)
      : Error(what), required_horizon_(required_horizon) {}
  double required_horizon() const noexcept { return required_horizon_; }

 private:
  double required_horizon_;
};

class ParseError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  int exit_code() const noexcept override { return 3; }
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class StabilityError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A simulated population outgrew its cap.
class CapError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Too many Monte Carlo replicas were discarded for the estimate to be trusted.
class ReliabilityError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

}  // namespace branchlab
