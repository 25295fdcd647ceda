// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#pragma once

#include <stdexcept>
#include <string>

namespace ttrnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape, axis or dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required, or an undefined quantity such as
// the cosine of a zero vector.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated input file, bad magic, failed checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint/record version or tag mismatch.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API object, e.g. running backward on a consumed tape.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace ttrnn
