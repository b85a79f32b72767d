#pragma once

#include <stdexcept>
#include <string>

namespace serda {

// Root of every error thrown by this library. The CLI maps any serda::Error
// to a single-line message and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not agree for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (log of x <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API contract (backward from a non-scalar root, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or missing data: out-of-range labels, empty splits, unavailable labels.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (WAV header, checkpoint, manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A loss or parameter became non-finite during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace serda
