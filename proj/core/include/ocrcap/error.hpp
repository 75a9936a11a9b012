#pragma once

#include <stdexcept>
#include <string>

namespace ocrcap {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files, vocabulary/checkpoint mismatch.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected in a loss, gradient or parameter.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocrcap
