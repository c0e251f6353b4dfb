#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gengap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values reached an operation that requires finite input.
class NumericInputError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes or layouts do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on an argument value was violated.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but carries no usable variation (zero variance,
/// zero entropy, no eligible pairs).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// An iterative method ran out of iterations.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_estimate)
      : Error(what), last_estimate_(last_estimate) {}
  double last_estimate() const noexcept { return last_estimate_; }

 private:
  double last_estimate_;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gengap
