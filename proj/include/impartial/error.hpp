#pragma once

#include <stdexcept>
#include <string>

namespace impartial {

/// Base of every error raised by the library. The CLI maps the subclasses
/// onto exit codes (config → 1, data → 2, numerical → 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or divergence during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace impartial
