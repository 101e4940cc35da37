#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stamping {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `row()` is the 1-based record index (0 when unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Records that are individually valid but disagree with each other.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Input too short for the requested operation.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix sizes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver stopped at its cap. `residual()` is the final violation.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Dataset cannot be split as requested.
class SplitError : public Error {
 public:
  using Error::Error;
};

}  // namespace stamping
