#pragma once

#include <stdexcept>
#include <string>

namespace lmpseq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Score or log-ratio requested at a point the null density does not charge.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Exact enumeration would exceed the configured history/rule budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

/// A boundary root could not be bracketed inside the value-function support.
class GridTooNarrow : public Error {
 public:
  GridTooNarrow(const std::string& what, double suggested_half_width)
      : Error(what), suggested_half_width_(suggested_half_width) {}
  double suggested_half_width() const noexcept { return suggested_half_width_; }

 private:
  double suggested_half_width_;
};

class RunawayError : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace lmpseq
