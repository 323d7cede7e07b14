#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace byteshot {

enum class ErrorCode {
  EmptyInput,
  PayloadTooLarge,
  ContextOverflow,
  SequenceTooShort,
  TokenOutOfRange,
  EmptyCorpus,
  EmptyPrefix,
  BudgetExhausted,
  IncompatibleThreatModel,
  EmptyPool,
  ZeroDenominator,
  DegenerateInput,
  MissingCheckpoint,
  CorruptCheckpoint,
  EmptyManifest,
  InvalidManifest,
  InvalidConfig,
  IoFailure,
  NonFiniteParameters,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace byteshot
