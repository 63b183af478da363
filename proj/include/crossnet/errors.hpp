#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crossnet {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InsufficientSample : public Error {
 public:
  using Error::Error;
};

// A matrix that must be positive definite failed its factorization.
class DegenerateMatrix : public Error {
 public:
  DegenerateMatrix(const std::string& what, std::size_t batch_rows)
      : Error(what + " (batch rows: " + std::to_string(batch_rows) + ")"),
        batch_rows_(batch_rows) {}

  std::size_t batch_rows() const noexcept { return batch_rows_; }

 private:
  std::size_t batch_rows_;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class InvalidSplit : public Error {
 public:
  using Error::Error;
};

// Raised by policy_risk when one of the conditional-mean cells is empty.
class UndefinedCell : public Error {
 public:
  UndefinedCell(const std::string& cell)
      : Error("policy risk cell is empty: " + cell), cell_(cell) {}
  const std::string& cell() const noexcept { return cell_; }

 private:
  std::string cell_;
};

// Non-finite loss or gradient during training.
class NumericalAbort : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace crossnet
