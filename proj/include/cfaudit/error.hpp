#pragma once

#include <stdexcept>
#include <string>

namespace cfaudit {

/// Broad failure classes. The CLI maps each one to its own exit code.
enum class ErrorCategory {
  config,      // invalid run configuration or usage
  data,        // malformed or inconsistent input data
  infeasible,  // the audit cannot be computed on this data
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& code, const std::string& message)
      : std::runtime_error(message), category_(category), code_(code) {}

  ErrorCategory category() const noexcept { return category_; }
  /// Short machine-readable identifier, e.g. "schema", "singular_design".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorCategory category_;
  std::string code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, const std::string& code = "config")
      : Error(ErrorCategory::config, code, message) {}
};

class DataError : public Error {
 public:
  DataError(const std::string& code, const std::string& message)
      : Error(ErrorCategory::data, code, message) {}
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& code, const std::string& message)
      : Error(ErrorCategory::infeasible, code, message) {}
};

}  // namespace cfaudit
