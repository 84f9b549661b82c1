#pragma once

#include <stdexcept>
#include <string>

namespace nisnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or network/attention configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Dataset ingestion or native-store problems.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// CNN -> SNN weight transfer between incompatible models.
class TransferError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted checkpoint container.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace nisnn
