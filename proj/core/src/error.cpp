#include "byteshot/error.hpp"

namespace byteshot {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyPrefix: return "EmptyPrefix";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::IncompatibleThreatModel: return "IncompatibleThreatModel";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::EmptyManifest: return "EmptyManifest";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NonFiniteParameters: return "NonFiniteParameters";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::NonFiniteParameters); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

}  // namespace byteshot
