// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sekit {

enum class ErrorCode {
  AllNegInfinity,
  BoundaryPoint,
  IndexOutOfRange,
  ZeroMarginal,
  ShapeMismatch,
  NonFiniteGradient,
  EmptyDataset,
  SplitOutOfRange,
  AllZeroWeights,
  DegenerateKernel,
  EmptyPool,
  AtomOutOfRange,
  DomainMismatch,
  EmptyCombination,
  SingularSystem,
  NonPositiveQ,
  SupportViolation,
  NonConvergence,
  ModeUnsupported,
  PlanGap,
  NotFound,
  IncompatiblePair,
  InvalidArgument,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AllNegInfinity: return "AllNegInfinity";
    case ErrorCode::BoundaryPoint: return "BoundaryPoint";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ZeroMarginal: return "ZeroMarginal";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SplitOutOfRange: return "SplitOutOfRange";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::DegenerateKernel: return "DegenerateKernel";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::AtomOutOfRange: return "AtomOutOfRange";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::EmptyCombination: return "EmptyCombination";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonPositiveQ: return "NonPositiveQ";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ModeUnsupported: return "ModeUnsupported";
    case ErrorCode::PlanGap: return "PlanGap";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::IncompatiblePair: return "IncompatiblePair";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace sekit
