#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tndve {

/// Failure classes surfaced by the library. The CLI maps each class onto a
/// fixed process exit code (see exit_code()).
enum class ErrorCategory {
  schema,           // malformed or incomplete input data
  config,           // invalid configuration / parameters
  io,               // unreadable or unwritable file
  precondition,     // caller violated an operation contract
  domain,           // evaluation outside a function's domain
  identifiability,  // singular system, unidentified parameters
  convergence,      // iterative solver did not converge
  degenerate_data,  // data cannot support the requested estimate
};

std::string_view to_string(ErrorCategory c) noexcept;

/// Exit code contract: schema/config/io/precondition/domain = 2,
/// identifiability = 3, convergence = 4, degenerate-data = 5.
int exit_code(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorCategory::schema, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error(ErrorCategory::precondition, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::domain, what) {}
};

class IdentifiabilityError : public Error {
 public:
  explicit IdentifiabilityError(const std::string& what)
      : Error(ErrorCategory::identifiability, what) {}
};

class ConvergenceError : public Error {
 public:
  /// `trajectory` holds the residual (or gradient) norm after each iteration.
  ConvergenceError(const std::string& what, std::vector<double> trajectory)
      : Error(ErrorCategory::convergence, what), trajectory_(std::move(trajectory)) {}

  const std::vector<double>& trajectory() const noexcept { return trajectory_; }
  double last_residual() const noexcept {
    return trajectory_.empty() ? 0.0 : trajectory_.back();
  }

 private:
  std::vector<double> trajectory_;
};

class DegenerateDataError : public Error {
 public:
  explicit DegenerateDataError(const std::string& what)
      : Error(ErrorCategory::degenerate_data, what) {}
};

}  // namespace tndve
