#pragma once

#include <stdexcept>
#include <string>

namespace dsaqc {

// Exception families map onto CLI exit codes: 1 validation, 2 I/O, 3 degenerate data.

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnsupportedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class NotFoundError : public IoError {
 public:
  using IoError::IoError;
};

class DegenerateDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InfeasibleError : public DegenerateDataError {
 public:
  using DegenerateDataError::DegenerateDataError;
};

/// Exit status the CLI reports for an in-flight exception.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace dsaqc
