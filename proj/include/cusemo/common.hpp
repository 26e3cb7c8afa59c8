#pragma once

#include <stdexcept>
#include <string>

namespace cusemo {

// Bad data: malformed files, violated invariants, mismatched inputs.
// The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// File is structurally not what it claims to be (truncated header etc).
class FormatError : public ValidationError {
 public:
  explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// File parses but uses a feature this pipeline does not handle.
class UnsupportedFormatError : public ValidationError {
 public:
  explicit UnsupportedFormatError(const std::string& msg) : ValidationError(msg) {}
};

// Statistic is undefined on this input (zero variance, no pairable values).
class DegenerateInputError : public ValidationError {
 public:
  explicit DegenerateInputError(const std::string& msg) : ValidationError(msg) {}
};

// Failure while running: non-finite loss, unwritable output path.
// The CLI maps these to exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cusemo
