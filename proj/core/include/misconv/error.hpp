#pragma once

#include <stdexcept>
#include <string>

namespace misconv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A density was requested for a component with a zero or negative variance.
class DegenerateDensityError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure gave up. `best_estimate` holds the last value reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_estimate)
      : Error(what), best_estimate_(best_estimate) {}

  double best_estimate() const noexcept { return best_estimate_; }

 private:
  double best_estimate_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace misconv
