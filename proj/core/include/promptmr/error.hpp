#pragma once

#include <stdexcept>
#include <string>

namespace promptmr {

// Exception hierarchy. The CLI maps these onto process exit codes:
// ConfigError -> 2, DataError (and subclasses) -> 3, DivergenceError -> 4.

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed container or checkpoint header. `field()` names the offending key.
class FormatError : public DataError {
 public:
  FormatError(std::string field, const std::string& what)
      : DataError("format error in '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Payload shorter or longer than the manifest declares.
class LengthError : public DataError {
 public:
  using DataError::DataError;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace promptmr
