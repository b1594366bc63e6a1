#ifndef AGGSPLIT_ERROR_HPP
#define AGGSPLIT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace aggsplit {

enum class ErrorCode {
  DimensionMismatch,
  NonConvexObjective,
  InfeasibleLocalSet,
  SlaterViolation,
  DisconnectedGraph,
  NonNegativeWeight,
  NotPositiveDefinite,
  SingularSystem,
  QpFailure,
  InfeasibleLocalProjection,
  MaxIterExceeded,
  ProtocolViolation,
  ParseError,
  ValidationError,
  NonConvexBenchmark,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace aggsplit

#endif  // AGGSPLIT_ERROR_HPP
