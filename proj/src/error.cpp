#include "tbctl/error.hpp"

namespace tbctl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::BucketDrained: return "BucketDrained";
    case ErrorCode::InvalidCombination: return "InvalidCombination";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::ConstraintViolated: return "ConstraintViolated";
    case ErrorCode::NotInTerminalRegion: return "NotInTerminalRegion";
    case ErrorCode::CertificationFailed: return "CertificationFailed";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::InitialInfeasible: return "InitialInfeasible";
    case ErrorCode::InternalFeasibilityLoss: return "InternalFeasibilityLoss";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace tbctl
