#pragma once

#include <stdexcept>
#include <string>

namespace clarify {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, probability outside its domain, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, ids, spans).
class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace clarify
