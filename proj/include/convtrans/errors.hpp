#pragma once

#include <stdexcept>
#include <string>

namespace cts {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters, shape mismatches between ops, incompatible checkpoints.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: missing files, out-of-range labels, extent mismatches, NaN losses.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A statistical test got too few usable observations.
class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace cts
