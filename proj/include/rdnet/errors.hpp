#pragma once

#include <stdexcept>
#include <string>

namespace rdnet {

/// Base of every error the library raises. Validation errors map to CLI exit
/// code 1, I/O errors to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operand shapes are incompatible.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// An argument is outside the operation's domain (even kernel, odd DWT size, ...).
class ArgumentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A configuration key or value is invalid.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// An object was used in the wrong state (e.g. optimizer step without gradients).
class StateError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// An operation produced NaN or Inf.
class NumericError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rdnet
