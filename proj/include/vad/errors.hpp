#pragma once

#include <stdexcept>
#include <string>

namespace vad {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad ratio, empty input, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Layers of a feature stack cannot be brought onto one grid.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Vector/feature dimensionality does not match its consumer.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Image codec failed to encode or decode a stream.
class CodecError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration file or values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Binary container problems. Each corruption class has its own kind so
// callers (and tests) can tell them apart.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, unsupported_version, truncated, size_mismatch, invalid_value };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline const char* to_string(FormatError::Kind k) {
  switch (k) {
    case FormatError::Kind::bad_magic: return "bad_magic";
    case FormatError::Kind::unsupported_version: return "unsupported_version";
    case FormatError::Kind::truncated: return "truncated";
    case FormatError::Kind::size_mismatch: return "size_mismatch";
    case FormatError::Kind::invalid_value: return "invalid_value";
  }
  return "unknown";
}

}  // namespace vad
