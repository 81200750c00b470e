#include "obsv/error.hpp"

namespace obsv {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInvalidState: return "invalid-state";
    case ErrorKind::kIntegration: return "integration-failure";
    case ErrorKind::kDomain: return "domain-error";
    case ErrorKind::kNumericFailure: return "numeric-failure";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kConvergence: return "non-convergence";
    case ErrorKind::kConfig: return "config-error";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

IntegrationError::IntegrationError(const std::string& message, long step)
    : Error(ErrorKind::kIntegration,
            step >= 0 ? message + " (step " + std::to_string(step) + ")" : message),
      step_(step) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace obsv
