#pragma once

#include <stdexcept>
#include <string>

namespace poseguide {

// Base class for all library errors. CLI maps these to exit code 2
// (input error); invariant-check failures use exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or semantically invalid input file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Binary container violations (bad magic, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures (missing file, short read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

// Tensor/image dimension mismatches; message names the offending level
// or operand where known.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range frame/timestep indices.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Invalid parameter values (even NMS kernel, non-positive sigma, ...).
class ParamError : public Error {
 public:
  using Error::Error;
};

// Unknown variant names, inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace poseguide
