#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace obsv {

enum class ErrorKind {
  kInvalidArgument,
  kInvalidState,
  kIntegration,
  kDomain,
  kNumericFailure,
  kPrecondition,
  kConvergence,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

/// Base error for the library. `kind` is what callers dispatch on (the CLI
/// maps it to an exit code); the message carries the context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a trajectory or estimator step produces non-finite values.
/// `step` is -1 when the failing call had no step context.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& message, long step = -1);

  long step() const noexcept { return step_; }

 private:
  long step_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace obsv
