#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evpose {

// Root of every error the library throws. The CLI maps the three families
// below onto exit codes (config 2, io 3, validation 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates an invariant (bad record, wrong shape, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class FormatError : public ValidationError {
 public:
  FormatError(const std::string& what, std::size_t location)
      : ValidationError(what + " (at " + std::to_string(location) + ")"),
        location_(location) {}

  // Line number for text formats, byte offset for binary ones.
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

class OrderError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class JointCountError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class OutOfRangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AllMaskedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class OverlapError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyDatasetError : public EmptyError {
 public:
  using EmptyError::EmptyError;
};

}  // namespace evpose
