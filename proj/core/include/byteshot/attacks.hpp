#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "byteshot/binfile.hpp"
#include "byteshot/bytelm/config.hpp"
#include "byteshot/bytelm/params.hpp"
#include "byteshot/detector/oracle.hpp"
#include "byteshot/error.hpp"

namespace byteshot::attacks {

enum class Strategy { RandomAppend, BenignAppend, EnhancedBenignAppend, RnnStyleLm, LmGuided };

inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::RandomAppend, Strategy::BenignAppend, Strategy::EnhancedBenignAppend,
    Strategy::RnnStyleLm, Strategy::LmGuided,
};

std::string_view to_string(Strategy s) noexcept;
std::optional<Strategy> parse_strategy(std::string_view name) noexcept;

struct AttackOutcome {
  std::string sample_id;
  std::optional<CategoryLabel> category;
  Strategy strategy = Strategy::RandomAppend;
  bool evaded = false;
  bool functional = false;
  int queries_used = 0;
  std::size_t payload_bytes = 0;
  /// Set when the attack stopped on a threat-model or generation error.
  std::optional<ErrorCode> aborted;

  bool operator==(const AttackOutcome&) const = default;
};

/// Benign files available to the benign-sourced strategies.
struct BenignPool {
  std::vector<BinarySample> samples;
  std::uint64_t seed = 0;
};

using detector::BlackBoxOracle;

/// Appends `payload`, checks integrity and spends one query. Threat-model
/// errors are recorded in `aborted` instead of thrown.
AttackOutcome append_and_query(const BinarySample& sample, ByteView payload, Strategy strategy,
                               const ThreatModel& model, QueryBudget& budget,
                               const BlackBoxOracle& oracle);

/// max_append_bytes uniformly random bytes drawn from `seed`, one query.
AttackOutcome random_append_attack(const BinarySample& sample, const ThreatModel& model,
                                   QueryBudget& budget, const BlackBoxOracle& oracle, std::uint64_t seed);

/// One contiguous slice (max_append_bytes long, or a whole shorter file) of a
/// seeded pick from the pool, one query. Throws EmptyPool.
AttackOutcome benign_append_attack(const BinarySample& sample, const BenignPool& pool,
                                   const ThreatModel& model, QueryBudget& budget,
                                   const BlackBoxOracle& oracle);

struct EnhancedBenignSettings {
  std::size_t chunk_bytes = 1024;
  int candidates_per_round = 8;
};

struct GreedyStep {
  /// Candidate with the lowest observed score among those queried.
  std::optional<std::size_t> best;
  /// Candidate whose query came back benign, if any (search stops there).
  std::optional<std::size_t> evading;
  int queries = 0;
};

/// Queries sample + payload + candidate for each candidate in order until the
/// budget runs out or one evades. Requires score feedback.
GreedyStep greedy_append_step(const BinarySample& sample, ByteView payload,
                              std::span<const Bytes> candidates, const ThreatModel& model,
                              QueryBudget& budget, const BlackBoxOracle& oracle);

/// Greedy score-guided benign chunk appending. Throws IncompatibleThreatModel
/// unless the threat model offers score feedback and at least two queries,
/// and EmptyPool for an empty pool.
AttackOutcome enhanced_benign_append_attack(const BinarySample& sample, const BenignPool& pool,
                                            const ThreatModel& model, QueryBudget& budget,
                                            const BlackBoxOracle& oracle,
                                            const EnhancedBenignSettings& settings = {});

/// Conditions the language model on the sample, appends the generated
/// payload, checks integrity and spends exactly one query.
AttackOutcome lm_guided_attack(const BinarySample& sample, const bytelm::LanguageModel& lm,
                               const bytelm::SamplerConfig& sampler, const ThreatModel& model,
                               QueryBudget& budget, const BlackBoxOracle& oracle);

/// Same contract as lm_guided_attack, driven by the weaker single-block model.
AttackOutcome rnn_style_lm_attack(const BinarySample& sample, const bytelm::LanguageModel& small_lm,
                                  const bytelm::SamplerConfig& sampler, const ThreatModel& model,
                                  QueryBudget& budget, const BlackBoxOracle& oracle);

/// Runs an LM-driven strategy over many samples with decoding batched across
/// samples. Each sample gets a fresh budget; outcome i is identical to the
/// single-sample call with samplers[i].
std::vector<AttackOutcome> lm_attack_batch(std::span<const BinarySample> samples, Strategy strategy,
                                           const bytelm::LanguageModel& lm,
                                           std::span<const bytelm::SamplerConfig> samplers,
                                           const ThreatModel& model, const BlackBoxOracle& oracle);

}  // namespace byteshot::attacks
