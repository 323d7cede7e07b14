#include "byteshot/harness/experiment.hpp"

#include <algorithm>
#include <thread>

#include "byteshot/checkpoint.hpp"
#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::harness {

using attacks::AttackOutcome;
using attacks::Strategy;

std::vector<ColumnSpec> standard_columns(const ThreatModel& primary, int enhanced_queries) {
  std::vector<ColumnSpec> cols;
  for (auto s : attacks::kAllStrategies) cols.push_back({std::string(attacks::to_string(s)), s, primary});
  if (enhanced_queries >= 2) {
    ThreatModel multi = primary;
    multi.max_queries = enhanced_queries;
    multi.feedback = FeedbackMode::ScoreFeedback;
    cols.push_back({"enhanced_benign_append@q" + std::to_string(enhanced_queries),
                    Strategy::EnhancedBenignAppend, multi});
  }
  return cols;
}

namespace {

bool is_lm(Strategy s) { return s == Strategy::LmGuided || s == Strategy::RnnStyleLm; }

/// Runs `fn(begin, end)` over contiguous shards of [0, n).
template <typename Fn>
void sharded(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        fn(n * w / workers, n * (w + 1) / workers);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

AttackOutcome incompatible(const BinarySample& s, Strategy strategy, ErrorCode code) {
  AttackOutcome o;
  o.sample_id = s.sample_id;
  o.category = s.category;
  o.strategy = strategy;
  o.aborted = code;
  return o;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<BinarySample>& malicious,
                                const std::vector<BinarySample>& benign, const ExperimentModels& models) {
  if (malicious.empty()) throw Error(ErrorCode::EmptyManifest, "no malicious samples to attack");
  if (!models.detector) throw Error(ErrorCode::MissingCheckpoint, "detector");
  if (config.columns.empty()) throw Error(ErrorCode::InvalidConfig, "no strategies selected");
  for (const auto& col : config.columns) {
    col.threat_model.validate();
    if (col.strategy == Strategy::LmGuided && !models.lm) throw Error(ErrorCode::MissingCheckpoint, "language model");
    if (col.strategy == Strategy::RnnStyleLm && !models.rnn_lm)
      throw Error(ErrorCode::MissingCheckpoint, "rnn-style language model");
  }

  ExperimentResult result;
  RunMetadata& meta = result.meta;
  meta.threat_model = config.columns.front().threat_model;
  meta.columns = config.columns;
  meta.fingerprints = models.fingerprints;
  meta.seeds["experiment"] = config.seed;
  meta.settings["temperature"] = format_real(config.sampler.temperature);
  meta.settings["top_k"] = std::to_string(config.sampler.top_k);
  meta.settings["greedy"] = config.sampler.greedy ? "true" : "false";
  meta.settings["lm_payload_bytes"] = std::to_string(config.lm_payload_bytes);
  meta.settings["enhanced_chunk_bytes"] = std::to_string(config.enhanced.chunk_bytes);
  meta.settings["enhanced_candidates_per_round"] = std::to_string(config.enhanced.candidates_per_round);
  meta.malicious_total = malicious.size();

  // Pre-screen: samples the detector already misses are not attacked.
  std::vector<BinarySample> targets;
  for (const auto& s : malicious)
    if (models.detector->is_malicious(s.bytes)) targets.push_back(s);
  meta.excluded_initially_benign = malicious.size() - targets.size();
  std::sort(targets.begin(), targets.end(), [](const BinarySample& a, const BinarySample& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.sample_id < b.sample_id;
  });

  attacks::BenignPool pool;
  pool.samples = benign;
  pool.seed = derive_seed(config.seed, "attack.benign_pool");
  meta.seeds["attack.benign_pool"] = pool.seed;

  for (const auto& col : config.columns) {
    const std::uint64_t stream = derive_seed(config.seed, "attack." + col.label);
    meta.seeds["attack." + col.label] = stream;
    const detector::BlackBoxOracle oracle(*models.detector, col.threat_model);
    std::vector<AttackOutcome> outcomes(targets.size());

    if (is_lm(col.strategy)) {
      const bytelm::LanguageModel& lm = col.strategy == Strategy::LmGuided ? *models.lm : *models.rnn_lm;
      std::vector<bytelm::SamplerConfig> samplers;
      for (const auto& s : targets) {
        bytelm::SamplerConfig sc = config.sampler;
        sc.max_payload_bytes = std::min(config.lm_payload_bytes, col.threat_model.max_append_bytes);
        sc.seed = derive_seed(stream, s.sample_id);
        samplers.push_back(sc);
      }
      sharded(targets.size(), config.threads, [&](std::size_t b, std::size_t e) {
        const auto part = attacks::lm_attack_batch(std::span(targets).subspan(b, e - b), col.strategy, lm,
                                                   std::span(samplers).subspan(b, e - b), col.threat_model, oracle);
        std::copy(part.begin(), part.end(), outcomes.begin() + static_cast<std::ptrdiff_t>(b));
      });
    } else {
      sharded(targets.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          const auto& s = targets[i];
          QueryBudget budget = oracle.fresh_budget();
          try {
            switch (col.strategy) {
              case Strategy::RandomAppend:
                outcomes[i] = attacks::random_append_attack(s, col.threat_model, budget, oracle,
                                                            derive_seed(stream, s.sample_id));
                break;
              case Strategy::BenignAppend:
                outcomes[i] = attacks::benign_append_attack(s, pool, col.threat_model, budget, oracle);
                break;
              default:
                outcomes[i] = attacks::enhanced_benign_append_attack(s, pool, col.threat_model, budget, oracle,
                                                                     config.enhanced);
                break;
            }
          } catch (const Error& err) {
            // Precondition failures (wrong threat model, empty pool) count as
            // attacked-but-not-evaded.
            outcomes[i] = incompatible(s, col.strategy, err.code());
          }
        }
      });
    }
    for (auto& o : outcomes) result.rows.push_back({col.label, std::move(o)});
  }

  result.report = build_report(meta, result.rows);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const CorpusManifest& manifest,
                                const std::filesystem::path& corpus_root, const CheckpointPaths& checkpoints) {
  manifest.validate();
  if (manifest.entries.empty()) throw Error(ErrorCode::EmptyManifest, "manifest has no entries");

  ExperimentModels models;
  const detector::GatedConvDetector det(detector::DetectorModel::load(checkpoints.detector));
  models.detector = &det;
  models.fingerprints["detector"] = file_fingerprint(checkpoints.detector);

  const bool needs_lm = std::any_of(config.columns.begin(), config.columns.end(),
                                    [](const ColumnSpec& c) { return c.strategy == Strategy::LmGuided; });
  const bool needs_rnn = std::any_of(config.columns.begin(), config.columns.end(),
                                     [](const ColumnSpec& c) { return c.strategy == Strategy::RnnStyleLm; });
  std::optional<bytelm::LanguageModel> lm, rnn;
  if (needs_lm) {
    lm = bytelm::LanguageModel::load(checkpoints.lm);
    models.lm = &*lm;
    models.fingerprints["lm"] = file_fingerprint(checkpoints.lm);
  }
  if (needs_rnn) {
    if (!checkpoints.rnn_lm) throw Error(ErrorCode::MissingCheckpoint, "rnn-style language model path not given");
    rnn = bytelm::LanguageModel::load(*checkpoints.rnn_lm);
    models.rnn_lm = &*rnn;
    models.fingerprints["rnn_lm"] = file_fingerprint(*checkpoints.rnn_lm);
  }

  const auto malicious = load_samples(manifest, corpus_root, SampleLabel::Malicious);
  const auto benign = load_samples(manifest, corpus_root, SampleLabel::Benign);
  return run_experiment(config, malicious, benign, models);
}

}  // namespace byteshot::harness
