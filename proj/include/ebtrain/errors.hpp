#pragma once

#include <stdexcept>
#include <string>

namespace ebt {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration or hyperparameter (exit code 2 at the CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint bytes (exit code 3 at the CLI).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatch or otherwise inconsistent operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a numerical operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or aborted (exit code 4 at the CLI).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace ebt
