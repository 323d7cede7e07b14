#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "byteshot/attacks.hpp"
#include "byteshot/bytelm/config.hpp"
#include "byteshot/bytelm/params.hpp"
#include "byteshot/detector/oracle.hpp"
#include "byteshot/harness/manifest.hpp"
#include "byteshot/harness/report.hpp"

namespace byteshot::harness {

/// One column per strategy under `primary`, plus, when `enhanced_queries` is at
/// least 2, a column running enhanced benign append with score feedback and
/// that many queries.
std::vector<ColumnSpec> standard_columns(const ThreatModel& primary, int enhanced_queries);

struct ExperimentConfig {
  std::vector<ColumnSpec> columns;
  /// Decoding settings; seed and max_payload_bytes are set per sample.
  bytelm::SamplerConfig sampler;
  /// Upper bound on generated payload length, clipped to each column's cap.
  std::size_t lm_payload_bytes = 10 * 1024;
  attacks::EnhancedBenignSettings enhanced;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ExperimentModels {
  const detector::ScoringModel* detector = nullptr;
  const bytelm::LanguageModel* lm = nullptr;
  /// Needed only for rnn_style_lm columns.
  const bytelm::LanguageModel* rnn_lm = nullptr;
  std::map<std::string, std::string> fingerprints;
};

struct ExperimentResult {
  RunMetadata meta;
  std::vector<OutcomeRow> rows;
  EvasionReport report;
};

/// Attacks every malicious sample the detector initially flags, once per
/// column, and folds the outcomes into a report. Output does not depend on
/// `threads`. Throws EmptyManifest when there are no malicious samples and
/// MissingCheckpoint when a column needs a model that was not supplied.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<BinarySample>& malicious,
                                const std::vector<BinarySample>& benign, const ExperimentModels& models);

struct CheckpointPaths {
  std::filesystem::path detector;
  std::filesystem::path lm;
  std::optional<std::filesystem::path> rnn_lm;
};

/// Loads the checkpoints and the manifest's samples, then runs as above.
ExperimentResult run_experiment(const ExperimentConfig& config, const CorpusManifest& manifest,
                                const std::filesystem::path& corpus_root, const CheckpointPaths& checkpoints);

}  // namespace byteshot::harness
