#include "mixlq/errors.hpp"

#include <sstream>

namespace mixlq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::Inadmissible: return "Inadmissible";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NotTimeInvariant: return "NotTimeInvariant";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SingularLambda: return "SingularLambda";
    case ErrorCode::SingularLambda2: return "SingularLambda2";
    case ErrorCode::SingularLambdaHat: return "SingularLambdaHat";
    case ErrorCode::BlowUp: return "BlowUp";
    case ErrorCode::NotPositive: return "NotPositive";
    case ErrorCode::RepresentationMismatch: return "RepresentationMismatch";
    case ErrorCode::EmptyBundle: return "EmptyBundle";
    case ErrorCode::NoConvergence: return "NoConvergence";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NotSymmetric:
    case ErrorCode::NotPSD:
    case ErrorCode::Inadmissible:
    case ErrorCode::OutOfRange:
    case ErrorCode::GridMismatch:
    case ErrorCode::NotTimeInvariant:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParseError:
      return true;
    default:
      return false;
  }
}

namespace {

std::string format_message(ErrorCode code, const std::string& message,
                           std::optional<double> time) {
  std::ostringstream os;
  os << to_string(code) << ": " << message;
  if (time) {
    os.precision(17);
    os << " (at t=" << *time << ")";
  }
  return os.str();
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<double> time)
    : std::runtime_error(format_message(code, message, time)),
      code_(code),
      detail_(message),
      time_(time) {}

}  // namespace mixlq
