#pragma once

#include <stdexcept>
#include <string>

namespace lasvad {

// Process exit codes used by the CLI. Every library error maps onto one.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kDataFormat = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Bad configuration, argument or cross-file inconsistency (e.g. D mismatch).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

// Content that parses but violates a domain invariant (label consistency, zero rows...).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

// Row counts of text-bank inputs disagree.
class AlignmentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Metric is undefined on the given labels (single class, no positives, no ground truth).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ExitCode::kDataFormat, what) {}
};

class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ParseError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kDataFormat, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

// Cosine normalisation requested on an all-zero row.
class DegenerateInputError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace lasvad
