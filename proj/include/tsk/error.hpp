#pragma once

#include <stdexcept>
#include <string>

namespace tsk {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV or sparse text).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose content violates the expected schema
/// (e.g. a non-integer label).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration: bad split fractions, N < R, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mismatched dimensions between a model and the data handed to it.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Input for which an operation is mathematically undefined, such as an
/// all-zero Z vector under L1/L2 normalization.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameters during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsk
