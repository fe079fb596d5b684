#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quasitest {

enum class ErrorCode {
  InvalidArgument,
  LengthMismatch,
  InfeasibleSample,
  NegativeWeight,
  OracleTooLarge,
  DegenerateLaw,
  EmptyInput,
  TooFewUncensored,
  NonTruncatedInput,
  DeadEnd,
  AllDrawsDead,
  ZeroTotalWeight,
  NoValidCenters,
  ZeroNormalizer,
  ZeroWeightAtPoint,
  ZeroConditionalExpectation,
  EstimatorNotApplicable,
  InvalidParameter,
  BoundViolated,
  AcceptanceTooLow,
  ParseError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InfeasibleSample: return "InfeasibleSample";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
    case ErrorCode::DegenerateLaw: return "DegenerateLaw";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewUncensored: return "TooFewUncensored";
    case ErrorCode::NonTruncatedInput: return "NonTruncatedInput";
    case ErrorCode::DeadEnd: return "DeadEnd";
    case ErrorCode::AllDrawsDead: return "AllDrawsDead";
    case ErrorCode::ZeroTotalWeight: return "ZeroTotalWeight";
    case ErrorCode::NoValidCenters: return "NoValidCenters";
    case ErrorCode::ZeroNormalizer: return "ZeroNormalizer";
    case ErrorCode::ZeroWeightAtPoint: return "ZeroWeightAtPoint";
    case ErrorCode::ZeroConditionalExpectation: return "ZeroConditionalExpectation";
    case ErrorCode::EstimatorNotApplicable: return "EstimatorNotApplicable";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::BoundViolated: return "BoundViolated";
    case ErrorCode::AcceptanceTooLow: return "AcceptanceTooLow";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the failure class so callers (the CLI in particular) can map it
/// to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace quasitest
