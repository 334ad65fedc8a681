#pragma once

#include <stdexcept>
#include <string>

namespace lgwae {

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unusable input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON document violating a file schema; carries a JSON pointer to the offending field.
class SchemaError : public DataError {
 public:
  SchemaError(std::string pointer, const std::string& message)
      : DataError(pointer + ": " + message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// Malformed binary checkpoint.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace lgwae
