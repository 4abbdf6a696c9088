#pragma once

#include <stdexcept>
#include <string>

namespace cllmix {

// Root of the library's exception hierarchy. The command-line tool maps the
// leaf types onto exit codes: UsageError/ConfigError -> 1, DataError -> 2,
// NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of a math primitive (non-finite input, sigma <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: grid size, simulation design, fit options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse such as mismatched dimensions or empty inputs.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Result file written by an incompatible schema version.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cllmix
