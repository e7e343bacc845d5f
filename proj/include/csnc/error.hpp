#pragma once

#include <stdexcept>
#include <string>

namespace csnc {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value, unknown key, invalid hyperparameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problems with input data: audio files, corpora, manifests, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

class WavError : public DataError {
 public:
  using DataError::DataError;
};
class WavMissingError : public WavError {
 public:
  using WavError::WavError;
};
class WavFormatError : public WavError {
 public:
  using WavError::WavError;
};
class WavChannelError : public WavError {
 public:
  using WavError::WavError;
};
class WavCodecError : public WavError {
 public:
  using WavError::WavError;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};
class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ClassCountMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace csnc
