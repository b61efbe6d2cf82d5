#pragma once

#include <stdexcept>
#include <string>

namespace weakid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A symmetric system could not be factorized even after ridge regularization.
class NearSingular : public Error {
 public:
  using Error::Error;
};

/// An iterative solver exhausted its iteration budget.
class NotConverged : public Error {
 public:
  using Error::Error;
};

/// Probit likelihood diverges because the outcome is perfectly separated.
class SeparationDetected : public Error {
 public:
  using Error::Error;
};

/// Instrument or run configuration incompatible with the data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Requested critical value is not part of the embedded lookup tables.
class UnsupportedDesign : public Error {
 public:
  using Error::Error;
};

/// Malformed numeric field in an input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input file lacks a requested column or is ambiguous about it.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Input values violate a contract (e.g. non-binary outcome).
class ValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace weakid
