#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mixlq {

enum class ErrorCode {
  // input errors
  DimensionMismatch,
  NotSymmetric,
  NotPSD,
  Inadmissible,
  OutOfRange,
  GridMismatch,
  NotTimeInvariant,
  InvalidArgument,
  ParseError,
  // numerical failures
  SingularLambda,
  SingularLambda2,
  SingularLambdaHat,
  BlowUp,
  NotPositive,
  RepresentationMismatch,
  EmptyBundle,
  // horizon extension did not settle
  NoConvergence,
};

std::string_view to_string(ErrorCode code);

/// True for codes caused by bad input rather than by the numerics.
bool is_input_error(ErrorCode code);

/// Exception carrying a stable error code and, where meaningful, the time at
/// which a solver or simulator failed. what() always starts with the code
/// name, e.g. "NotSymmetric: Q on interval 0 ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<double> time = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<double> time() const noexcept { return time_; }
  /// Message without the code prefix and time suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<double> time_;
};

}  // namespace mixlq
