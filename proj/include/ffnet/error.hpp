#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ffnet {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (bad file, bad config, violated precondition).
/// The CLI maps this family to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A sin/cos pair or an aggregate with no defined direction.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value met during optimisation.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace ffnet
