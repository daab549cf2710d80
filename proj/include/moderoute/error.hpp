#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moderoute {

enum class ErrorCode {
  MalformedTag,
  OrderViolation,
  UnknownMode,
  EmptyMask,
  InvalidWeights,
  UnknownUrl,
  ParseError,
  BudgetExceeded,
  DivisionByZero,
  VocabularyMismatch,
  NonFiniteGradient,
  NonFiniteRatio,
  NoForcedMembers,
  GroupTooSmall,
  EmptyResult,
  ZeroAccuracy,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace moderoute
