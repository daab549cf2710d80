#include "moderoute/error.hpp"

namespace moderoute {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTag: return "MalformedTag";
    case ErrorCode::OrderViolation: return "OrderViolation";
    case ErrorCode::UnknownMode: return "UnknownMode";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::InvalidWeights: return "InvalidWeights";
    case ErrorCode::UnknownUrl: return "UnknownUrl";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteRatio: return "NonFiniteRatio";
    case ErrorCode::NoForcedMembers: return "NoForcedMembers";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::ZeroAccuracy: return "ZeroAccuracy";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace moderoute
