#include "aggsplit/error.hpp"

namespace aggsplit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonConvexObjective: return "NonConvexObjective";
    case ErrorCode::InfeasibleLocalSet: return "InfeasibleLocalSet";
    case ErrorCode::SlaterViolation: return "SlaterViolation";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::NonNegativeWeight: return "NonNegativeWeight";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::QpFailure: return "QpFailure";
    case ErrorCode::InfeasibleLocalProjection: return "InfeasibleLocalProjection";
    case ErrorCode::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::NonConvexBenchmark: return "NonConvexBenchmark";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace aggsplit
