#include "tndve/error.hpp"

namespace tndve {

std::string_view to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::precondition: return "precondition";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::identifiability: return "identifiability";
    case ErrorCategory::convergence: return "convergence";
    case ErrorCategory::degenerate_data: return "degenerate-data";
  }
  return "unknown";
}

int exit_code(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::identifiability: return 3;
    case ErrorCategory::convergence: return 4;
    case ErrorCategory::degenerate_data: return 5;
    default: return 2;
  }
}

}  // namespace tndve
