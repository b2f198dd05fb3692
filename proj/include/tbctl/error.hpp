#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tbctl {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotSymmetric,
  NonConvergent,
  IllConditioned,
  BucketDrained,
  InvalidCombination,
  OutOfRange,
  PreconditionViolated,
  ConstraintViolated,
  NotInTerminalRegion,
  CertificationFailed,
  Infeasible,
  InitialInfeasible,
  InternalFeasibilityLoss,
  LengthMismatch,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the library. The code lets
/// callers (the CLI in particular) map failures onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace tbctl
