#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "byteshot/binfile.hpp"
#include "byteshot/harness/manifest.hpp"

namespace byteshot::harness {

struct SizeRange {
  std::size_t min_bytes = 0;
  std::size_t max_bytes = 0;
};

/// Relative shares of the segment kinds a file body is assembled from.
/// Shares need not sum to one.
struct ClassByteProfile {
  double random_share = 0.0;  ///< uniformly random bytes, like packed data
  double text_share = 0.0;    ///< key/value and markup text lines
  double code_share = 0.0;    ///< low-entropy instruction-like patterns
  double zero_share = 0.0;    ///< zero padding runs
  /// Category signature insertions per file (malicious only).
  std::size_t motifs_per_file = 0;
};

struct SyntheticCorpusSpec {
  std::size_t num_benign = 64;
  std::map<CategoryLabel, std::size_t> num_malicious_per_category;
  SizeRange benign_length{2048, 12288};
  std::map<CategoryLabel, SizeRange> length_range_bytes;
  ClassByteProfile benign_profile;
  ClassByteProfile malicious_profile;
  /// Required Jensen-Shannon divergence (bits) between the two classes'
  /// mean byte histograms.
  double min_divergence = 0.1;
  std::uint64_t seed = 0;

  /// Default profiles and sizes: droppers and viruses small, backdoors and
  /// ransomware large.
  static SyntheticCorpusSpec desk(std::size_t num_benign, std::size_t per_category, std::uint64_t seed);

  /// Throws InvalidConfig.
  void validate() const;
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  /// Parallel to manifest.entries.
  std::vector<Bytes> files;
  /// Measured class divergence; 0 when a class is empty.
  double divergence = 0.0;
};

/// Builds the corpus in memory. Identical specs give identical bytes. Throws
/// InvalidConfig when the measured divergence falls below the floor.
SyntheticCorpus synthesize_corpus(const SyntheticCorpusSpec& spec);

/// Writes manifest.json, benign/<id>.bin and malicious/<category>/<id>.bin
/// under `out_dir`. Throws IoFailure.
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec,
                                          const std::filesystem::path& out_dir);

/// Normalised byte histogram averaged over files.
std::vector<double> mean_byte_histogram(std::span<const Bytes> files);

/// Jensen-Shannon divergence in bits between two distributions.
double js_divergence(std::span<const double> p, std::span<const double> q);

}  // namespace byteshot::harness
