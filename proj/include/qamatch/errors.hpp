#pragma once

#include <stdexcept>
#include <string>

namespace qamatch {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors caused by the caller's input (bad flags, files, datasets). The CLI
// maps these to exit code 1.
class UserError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public UserError {
 public:
  explicit ConfigError(const std::string& what) : UserError("configuration error: " + what) {}
};

class InputError : public UserError {
 public:
  explicit InputError(const std::string& what) : UserError("input error: " + what) {}
};

class DatasetError : public UserError {
 public:
  explicit DatasetError(const std::string& what) : UserError("dataset error: " + what) {}
};

class LoadError : public UserError {
 public:
  explicit LoadError(const std::string& what) : UserError("load error: " + what) {}
};

// Everything below indicates a bug or an environment failure (exit code 2).
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension error: " + what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract error: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric error: " + what) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error("integrity error: " + what) {}
};

class PersistenceError : public Error {
 public:
  explicit PersistenceError(const std::string& what) : Error("persistence error: " + what) {}
};

}  // namespace qamatch
