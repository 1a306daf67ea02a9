// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ltgen {

/// Base of every error raised by the library. Each subclass names a failure
/// category; the CLI maps categories onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, non-convergence, or a degenerate numeric input.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public NumericError {
 public:
  using NumericError::NumericError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Long-tail profile cannot produce a valid split.
class ProfileError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// File does not start with the expected magic bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File header and payload disagree, or the payload is truncated.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Synthetic pool holds fewer images than a batch asks for.
class PoolError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint missing, invalid, or incompatible with the request.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// An upstream pipeline stage has not produced its artifact, or the artifact
/// no longer matches its recorded checksum.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace ltgen
