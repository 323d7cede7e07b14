#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "byteshot/binfile.hpp"
#include "byteshot/category.hpp"

namespace byteshot::harness {

enum class SampleLabel { Benign, Malicious };

std::string_view to_string(SampleLabel label) noexcept;

struct ManifestEntry {
  /// Relative to the manifest's directory unless absolute.
  std::string path;
  std::string sample_id;
  SampleLabel label = SampleLabel::Benign;
  std::optional<CategoryLabel> category;

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::vector<ManifestEntry> entries;

  /// Throws InvalidManifest on duplicate ids or uncategorised malicious entries.
  void validate() const;
  std::vector<const ManifestEntry*> with_label(SampleLabel label) const;

  bool operator==(const CorpusManifest&) const = default;
};

std::string manifest_to_json(const CorpusManifest& manifest);
/// Throws InvalidManifest for malformed documents and EmptyManifest when
/// there are no entries.
CorpusManifest manifest_from_json(std::string_view text);

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
/// Throws IoFailure when the file cannot be read.
CorpusManifest load_manifest(const std::filesystem::path& path);

/// Reads and parses every entry whose label matches, in manifest order.
std::vector<BinarySample> load_samples(const CorpusManifest& manifest,
                                       const std::filesystem::path& root,
                                       std::optional<SampleLabel> label = std::nullopt);

}  // namespace byteshot::harness
