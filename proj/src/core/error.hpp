#pragma once

#include <stdexcept>
#include <string>

namespace cisskip {

// Error categories mirror the CLI exit codes: usage -> 1, format -> 2,
// numeric -> 3.
enum class ErrorCategory { usage = 1, format = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string msg)
      : std::runtime_error(std::move(msg)), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Dimension or layout mismatch between operands.
struct ShapeError : Error {
  explicit ShapeError(std::string msg) : Error(ErrorCategory::usage, std::move(msg)) {}
};

// Argument outside its documented domain.
struct RangeError : Error {
  explicit RangeError(std::string msg) : Error(ErrorCategory::usage, std::move(msg)) {}
};

// Operation requested in an impossible state (e.g. masked read before any full read).
struct StateError : Error {
  explicit StateError(std::string msg) : Error(ErrorCategory::usage, std::move(msg)) {}
};

// Inconsistent configuration (mode/mask combinations, bad spec values).
struct ConfigError : Error {
  explicit ConfigError(std::string msg) : Error(ErrorCategory::usage, std::move(msg)) {}
};

// Filesystem problems: missing or unwritable paths.
struct IoError : Error {
  explicit IoError(std::string msg) : Error(ErrorCategory::usage, std::move(msg)) {}
};

// Malformed file contents (PGM headers, JSON, weight manifests).
struct FormatError : Error {
  explicit FormatError(std::string msg) : Error(ErrorCategory::format, std::move(msg)) {}
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  explicit NumericError(std::string msg) : Error(ErrorCategory::numeric, std::move(msg)) {}
};

}  // namespace cisskip
