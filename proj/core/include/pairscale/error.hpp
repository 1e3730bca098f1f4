#pragma once

#include <stdexcept>
#include <string>

namespace pairscale {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating input (files, arguments, matrices).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Input file could not be parsed; the message names the offending row.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t row)
      : ValidationError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Solver failed to reach the requested gradient tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gradient_norm)
      : Error(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

}  // namespace pairscale
