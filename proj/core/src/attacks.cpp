#include "byteshot/attacks.hpp"

#include <algorithm>
#include <limits>

#include "byteshot/bytelm/generate.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::attacks {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::RandomAppend: return "random_append";
    case Strategy::BenignAppend: return "benign_append";
    case Strategy::EnhancedBenignAppend: return "enhanced_benign_append";
    case Strategy::RnnStyleLm: return "rnn_style_lm";
    case Strategy::LmGuided: return "lm_guided";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
  for (auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

namespace {

AttackOutcome blank_outcome(const BinarySample& sample, Strategy strategy) {
  AttackOutcome o;
  o.sample_id = sample.sample_id;
  o.category = sample.category;
  o.strategy = strategy;
  return o;
}

AttackOutcome aborted_outcome(const BinarySample& sample, Strategy strategy, const QueryBudget& budget,
                              ErrorCode code) {
  AttackOutcome o = blank_outcome(sample, strategy);
  o.queries_used = budget.consumed();
  o.aborted = code;
  return o;
}

void require_consistent(const ThreatModel& model, const BlackBoxOracle& oracle) {
  if (!(model == oracle.threat_model()))
    throw Error(ErrorCode::IncompatibleThreatModel, "attack and oracle disagree on the threat model");
}

/// Rejects a generation request that could only end in PayloadTooLarge.
void require_within_cap(const bytelm::SamplerConfig& sampler, const ThreatModel& model) {
  if (sampler.max_payload_bytes > model.max_append_bytes)
    throw Error(ErrorCode::PayloadTooLarge, "requested " + std::to_string(sampler.max_payload_bytes) +
                                                " bytes exceeds cap of " + std::to_string(model.max_append_bytes));
}

/// A contiguous slice of at most `max_len` bytes from a seeded pool pick.
Bytes draw_benign_slice(const BenignPool& pool, std::size_t max_len, Rng& rng) {
  const auto& file = pool.samples[uniform_index(rng, pool.samples.size())].bytes;
  const std::size_t len = std::min(max_len, file.size());
  const std::size_t start = uniform_index(rng, file.size() - len + 1);
  return Bytes(file.begin() + static_cast<std::ptrdiff_t>(start),
               file.begin() + static_cast<std::ptrdiff_t>(start + len));
}

void require_pool(const BenignPool& pool) {
  if (pool.samples.empty()) throw Error(ErrorCode::EmptyPool, "benign pool is empty");
}

}  // namespace

AttackOutcome append_and_query(const BinarySample& sample, ByteView payload, Strategy strategy,
                               const ThreatModel& model, QueryBudget& budget,
                               const BlackBoxOracle& oracle) {
  AttackOutcome o = blank_outcome(sample, strategy);
  try {
    require_consistent(model, oracle);
    const PerturbedSample perturbed = append_payload(sample, payload, model);
    o.payload_bytes = perturbed.payload.size();
    o.functional = verify_integrity(perturbed);
    const auto verdict = oracle.query(budget, perturbed.combined);
    o.evaded = !verdict.is_malicious;
  } catch (const Error& e) {
    o.evaded = false;
    o.aborted = e.code();
  }
  o.queries_used = budget.consumed();
  return o;
}

AttackOutcome random_append_attack(const BinarySample& sample, const ThreatModel& model,
                                   QueryBudget& budget, const BlackBoxOracle& oracle, std::uint64_t seed) {
  Rng rng(seed);
  Bytes payload(model.max_append_bytes);
  for (std::size_t i = 0; i < payload.size(); i += 8) {
    std::uint64_t word = rng();
    for (std::size_t k = i; k < std::min(payload.size(), i + 8); ++k, word >>= 8)
      payload[k] = static_cast<std::uint8_t>(word & 0xFF);
  }
  return append_and_query(sample, payload, Strategy::RandomAppend, model, budget, oracle);
}

AttackOutcome benign_append_attack(const BinarySample& sample, const BenignPool& pool,
                                   const ThreatModel& model, QueryBudget& budget,
                                   const BlackBoxOracle& oracle) {
  require_pool(pool);
  Rng rng(derive_seed(pool.seed, sample.sample_id));
  const Bytes payload = draw_benign_slice(pool, model.max_append_bytes, rng);
  return append_and_query(sample, payload, Strategy::BenignAppend, model, budget, oracle);
}

GreedyStep greedy_append_step(const BinarySample& sample, ByteView payload,
                              std::span<const Bytes> candidates, const ThreatModel& model,
                              QueryBudget& budget, const BlackBoxOracle& oracle) {
  if (model.feedback != FeedbackMode::ScoreFeedback)
    throw Error(ErrorCode::IncompatibleThreatModel, "greedy selection needs score feedback");
  GreedyStep step;
  double best_score = std::numeric_limits<double>::infinity();
  Bytes trial(payload.begin(), payload.end());
  for (std::size_t i = 0; i < candidates.size() && budget.remaining() > 0; ++i) {
    trial.resize(payload.size());
    trial.insert(trial.end(), candidates[i].begin(), candidates[i].end());
    const PerturbedSample perturbed = append_payload(sample, trial, model);
    const auto verdict = oracle.query(budget, perturbed.combined);
    ++step.queries;
    if (!verdict.is_malicious) {
      step.evading = i;
      step.best = i;
      break;
    }
    if (*verdict.score < best_score) {
      best_score = *verdict.score;
      step.best = i;
    }
  }
  return step;
}

AttackOutcome enhanced_benign_append_attack(const BinarySample& sample, const BenignPool& pool,
                                            const ThreatModel& model, QueryBudget& budget,
                                            const BlackBoxOracle& oracle,
                                            const EnhancedBenignSettings& settings) {
  if (model.feedback != FeedbackMode::ScoreFeedback || model.max_queries < 2) {
    throw Error(ErrorCode::IncompatibleThreatModel,
                "enhanced benign append needs score feedback and at least two queries");
  }
  require_pool(pool);
  if (settings.chunk_bytes == 0 || settings.candidates_per_round < 1)
    throw Error(ErrorCode::InvalidConfig, "chunk_bytes and candidates_per_round must be positive");

  AttackOutcome o = blank_outcome(sample, Strategy::EnhancedBenignAppend);
  Rng rng(derive_seed(pool.seed, "enhanced/" + sample.sample_id));
  Bytes payload;
  try {
    require_consistent(model, oracle);
    while (budget.remaining() > 0 && payload.size() < model.max_append_bytes && !o.evaded) {
      const std::size_t room = std::min(settings.chunk_bytes, model.max_append_bytes - payload.size());
      std::vector<Bytes> candidates;
      for (int c = 0; c < settings.candidates_per_round; ++c)
        candidates.push_back(draw_benign_slice(pool, room, rng));
      const GreedyStep step = greedy_append_step(sample, payload, candidates, model, budget, oracle);
      if (!step.best) break;
      const Bytes& chosen = candidates[*step.best];
      payload.insert(payload.end(), chosen.begin(), chosen.end());
      o.evaded = step.evading.has_value();
    }
    o.functional = verify_integrity(append_payload(sample, payload, model));
  } catch (const Error& e) {
    o.evaded = false;
    o.aborted = e.code();
  }
  o.payload_bytes = payload.size();
  o.queries_used = budget.consumed();
  return o;
}

namespace {

AttackOutcome lm_attack(const BinarySample& sample, Strategy strategy, const bytelm::LanguageModel& lm,
                        const bytelm::SamplerConfig& sampler, const ThreatModel& model,
                        QueryBudget& budget, const BlackBoxOracle& oracle) {
  Bytes payload;
  try {
    require_consistent(model, oracle);
    require_within_cap(sampler, model);
    payload = bytelm::lm_generate(lm, sampler, sample.bytes);
  } catch (const Error& e) {
    return aborted_outcome(sample, strategy, budget, e.code());
  }
  return append_and_query(sample, payload, strategy, model, budget, oracle);
}

}  // namespace

AttackOutcome lm_guided_attack(const BinarySample& sample, const bytelm::LanguageModel& lm,
                               const bytelm::SamplerConfig& sampler, const ThreatModel& model,
                               QueryBudget& budget, const BlackBoxOracle& oracle) {
  return lm_attack(sample, Strategy::LmGuided, lm, sampler, model, budget, oracle);
}

AttackOutcome rnn_style_lm_attack(const BinarySample& sample, const bytelm::LanguageModel& small_lm,
                                  const bytelm::SamplerConfig& sampler, const ThreatModel& model,
                                  QueryBudget& budget, const BlackBoxOracle& oracle) {
  return lm_attack(sample, Strategy::RnnStyleLm, small_lm, sampler, model, budget, oracle);
}

std::vector<AttackOutcome> lm_attack_batch(std::span<const BinarySample> samples, Strategy strategy,
                                           const bytelm::LanguageModel& lm,
                                           std::span<const bytelm::SamplerConfig> samplers,
                                           const ThreatModel& model, const BlackBoxOracle& oracle) {
  if (samples.size() != samplers.size())
    throw Error(ErrorCode::InvalidConfig, "one sampler per sample required");
  std::vector<AttackOutcome> outcomes(samples.size());
  std::vector<std::size_t> runnable;
  std::vector<std::span<const std::uint8_t>> prefixes;
  std::vector<bytelm::SamplerConfig> batch_samplers;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      samplers[i].validate();
      if (samples[i].bytes.empty()) throw Error(ErrorCode::EmptyPrefix, "empty sample");
      require_consistent(model, oracle);
      require_within_cap(samplers[i], model);
    } catch (const Error& e) {
      QueryBudget unused = oracle.fresh_budget();
      outcomes[i] = aborted_outcome(samples[i], strategy, unused, e.code());
      continue;
    }
    runnable.push_back(i);
    prefixes.emplace_back(samples[i].bytes);
    batch_samplers.push_back(samplers[i]);
  }
  const auto payloads = bytelm::lm_generate_batch(lm, batch_samplers, prefixes);
  for (std::size_t r = 0; r < runnable.size(); ++r) {
    const std::size_t i = runnable[r];
    QueryBudget budget = oracle.fresh_budget();
    outcomes[i] = append_and_query(samples[i], payloads[r], strategy, model, budget, oracle);
  }
  return outcomes;
}

}  // namespace byteshot::attacks
