#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>

#include "byteshot/detector/model.hpp"
#include "byteshot/threat_model.hpp"

namespace byteshot::detector {

/// Oracle answer. `score` is engaged only under score feedback.
struct Verdict {
  bool is_malicious = false;
  std::optional<double> score;

  bool operator==(const Verdict&) const = default;
};

/// Anything that maps bytes to a malicious-class score.
class ScoringModel {
 public:
  virtual ~ScoringModel() = default;
  virtual double score(std::span<const std::uint8_t> bytes) const = 0;
  virtual double threshold() const = 0;

  bool is_malicious(std::span<const std::uint8_t> bytes) const { return score(bytes) >= threshold(); }
};

class GatedConvDetector final : public ScoringModel {
 public:
  explicit GatedConvDetector(DetectorModel model) : model_(std::move(model)) {}

  double score(std::span<const std::uint8_t> bytes) const override { return model_.score(bytes); }
  double threshold() const override { return model_.config.threshold; }
  const DetectorModel& model() const { return model_; }

 private:
  DetectorModel model_;
};

/// One budgeted query: consumes exactly one unit from a copy of `budget` and
/// returns it alongside the verdict. Throws BudgetExhausted when no queries
/// remain.
std::pair<Verdict, QueryBudget> oracle_query(const ScoringModel& detector, const ThreatModel& model,
                                             QueryBudget budget, std::span<const std::uint8_t> bytes);

/// The only channel through which attacks observe the detector.
class BlackBoxOracle {
 public:
  BlackBoxOracle(const ScoringModel& detector, ThreatModel model);

  /// Consumes one unit of `budget`; throws BudgetExhausted when empty.
  Verdict query(QueryBudget& budget, std::span<const std::uint8_t> bytes) const;

  const ThreatModel& threat_model() const noexcept { return model_; }
  QueryBudget fresh_budget() const { return QueryBudget(model_.max_queries); }

 private:
  const ScoringModel& detector_;
  ThreatModel model_;
};

}  // namespace byteshot::detector
