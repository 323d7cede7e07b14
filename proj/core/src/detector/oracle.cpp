#include "byteshot/detector/oracle.hpp"

#include "byteshot/error.hpp"

namespace byteshot {

std::string_view to_string(FeedbackMode mode) noexcept {
  return mode == FeedbackMode::BooleanOnly ? "boolean_only" : "score_feedback";
}

void ThreatModel::validate() const {
  if (max_queries < 1) throw Error(ErrorCode::InvalidConfig, "max_queries must be >= 1");
}

QueryBudget::QueryBudget(int max_queries) : remaining_(max_queries) {
  if (max_queries < 0) throw Error(ErrorCode::InvalidConfig, "query budget cannot be negative");
}

void QueryBudget::consume() {
  if (remaining_ <= 0) throw Error(ErrorCode::BudgetExhausted, "no queries remain");
  --remaining_;
  ++consumed_;
}

}  // namespace byteshot

namespace byteshot::detector {

std::pair<Verdict, QueryBudget> oracle_query(const ScoringModel& detector, const ThreatModel& model,
                                             QueryBudget budget, std::span<const std::uint8_t> bytes) {
  budget.consume();
  const double s = detector.score(bytes);
  Verdict v;
  v.is_malicious = s >= detector.threshold();
  if (model.feedback == FeedbackMode::ScoreFeedback) v.score = s;
  return {v, budget};
}

BlackBoxOracle::BlackBoxOracle(const ScoringModel& detector, ThreatModel model)
    : detector_(detector), model_(model) {
  model_.validate();
}

Verdict BlackBoxOracle::query(QueryBudget& budget, std::span<const std::uint8_t> bytes) const {
  auto [verdict, updated] = oracle_query(detector_, model_, budget, bytes);
  budget = updated;
  return verdict;
}

}  // namespace byteshot::detector
