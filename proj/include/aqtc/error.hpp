// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace aqtc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An index (ground-truth candidate, row) lies outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination of values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A forward operation produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent files on disk.
class DataError : public Error {
 public:
  enum class Kind {
    kParse,
    kMissingFile,
    kByteLength,
    kTruthRange,
    kDuplicateId,
    kDimMismatch,
    kVersion,
    kIo,
  };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace aqtc
