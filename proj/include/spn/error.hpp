#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spn {

enum class ErrorCode {
  CycleDetected,
  UnknownReference,
  EmptyChildren,
  NonNormalizedWeights,
  NegativeWeight,
  NonPositiveVariance,
  ScopeMismatch,
  UnknownNode,
  EvidenceTypeMismatch,
  NotASum,
  InvalidInputSpn,
  NotAnLv,
  StateOutOfRange,
  TooLarge,
  ContinuousVariablePresent,
  ZeroProbabilityRecord,
  EmptyMass,
  AllRecordsZero,
  NotSelective,
  EmptyEvidenceSet,
  ParseError,
  UnknownVariable,
  SchemaMismatch,
  AlreadyAugmented,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnknownReference: return "UnknownReference";
    case ErrorCode::EmptyChildren: return "EmptyChildren";
    case ErrorCode::NonNormalizedWeights: return "NonNormalizedWeights";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::ScopeMismatch: return "ScopeMismatch";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::EvidenceTypeMismatch: return "EvidenceTypeMismatch";
    case ErrorCode::NotASum: return "NotASum";
    case ErrorCode::InvalidInputSpn: return "InvalidInputSpn";
    case ErrorCode::NotAnLv: return "NotAnLv";
    case ErrorCode::StateOutOfRange: return "StateOutOfRange";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::ContinuousVariablePresent: return "ContinuousVariablePresent";
    case ErrorCode::ZeroProbabilityRecord: return "ZeroProbabilityRecord";
    case ErrorCode::EmptyMass: return "EmptyMass";
    case ErrorCode::AllRecordsZero: return "AllRecordsZero";
    case ErrorCode::NotSelective: return "NotSelective";
    case ErrorCode::EmptyEvidenceSet: return "EmptyEvidenceSet";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::AlreadyAugmented: return "AlreadyAugmented";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spn
