#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace grapht5 {

// Every failure raised by the library carries a category so the CLI can map
// it onto a distinct exit code.
enum class ErrorCategory {
  kDimension = 10,
  kContract = 11,
  kLex = 20,
  kParse = 21,
  kUnsupportedElement = 22,
  kConfig = 30,
  kFormat = 31,
  kVersion = 32,
  kEvaluation = 40,
  kDivergence = 41,
  kIo = 50,
};

std::string_view category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string &message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }
  int exit_code() const { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string &m) : Error(ErrorCategory::kDimension, m) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string &m) : Error(ErrorCategory::kContract, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &m) : Error(ErrorCategory::kConfig, m) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string &m) : Error(ErrorCategory::kFormat, m) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string &m) : Error(ErrorCategory::kVersion, m) {}
};

class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string &m) : Error(ErrorCategory::kEvaluation, m) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string &m) : Error(ErrorCategory::kDivergence, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string &m) : Error(ErrorCategory::kIo, m) {}
};

}  // namespace grapht5
