#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace schedgraph {

// Base of every error the library throws. The CLI maps ValidationError and
// its subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, bad arguments, bad input data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A record violates a TaskRecord / ScheduleTrace invariant.
class InvariantError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A record references a node or task that does not exist.
class ReferenceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// NaN/Inf produced somewhere it must not be.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling operations out of order, non-scalar loss, etc.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace schedgraph
