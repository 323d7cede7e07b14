#pragma once

#include <cstddef>
#include <string_view>

namespace byteshot {

enum class FeedbackMode { BooleanOnly, ScoreFeedback };

std::string_view to_string(FeedbackMode mode) noexcept;

/// Constraints an attack must operate under.
struct ThreatModel {
  /// Inclusive payload cap: 10 * 1024 bytes.
  static constexpr std::size_t kDefaultMaxAppendBytes = 10 * 1024;

  int max_queries = 1;
  std::size_t max_append_bytes = kDefaultMaxAppendBytes;
  FeedbackMode feedback = FeedbackMode::BooleanOnly;

  /// One boolean-only query and a 10 KiB append.
  static ThreatModel single_shot() { return {}; }

  /// Throws InvalidConfig if max_queries < 1.
  void validate() const;

  bool operator==(const ThreatModel&) const = default;
};

/// Per-attack query counter. remaining + consumed is constant.
class QueryBudget {
 public:
  explicit QueryBudget(int max_queries);

  int remaining() const noexcept { return remaining_; }
  int consumed() const noexcept { return consumed_; }
  int initial() const noexcept { return remaining_ + consumed_; }

  /// Takes one query; throws BudgetExhausted when none remain.
  void consume();

  bool operator==(const QueryBudget&) const = default;

 private:
  int remaining_;
  int consumed_ = 0;
};

}  // namespace byteshot
