#include "byteshot/harness/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "byteshot/checkpoint.hpp"
#include "byteshot/error.hpp"

namespace byteshot::harness {

using nlohmann::json;

std::string_view to_string(SampleLabel label) noexcept {
  return label == SampleLabel::Benign ? "benign" : "malicious";
}

void CorpusManifest::validate() const {
  if (format_version != kFormatVersion)
    throw Error(ErrorCode::InvalidManifest, "unsupported format_version " + std::to_string(format_version));
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.sample_id.empty()) throw Error(ErrorCode::InvalidManifest, "empty sample_id");
    if (e.path.empty()) throw Error(ErrorCode::InvalidManifest, "empty path for " + e.sample_id);
    if (!seen.insert(e.sample_id).second)
      throw Error(ErrorCode::InvalidManifest, "duplicate sample_id " + e.sample_id);
    if (e.label == SampleLabel::Malicious && !e.category)
      throw Error(ErrorCode::InvalidManifest, "malicious entry without category: " + e.sample_id);
  }
}

std::vector<const ManifestEntry*> CorpusManifest::with_label(SampleLabel label) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.label == label) out.push_back(&e);
  return out;
}

std::string manifest_to_json(const CorpusManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json j = {{"path", e.path}, {"sample_id", e.sample_id}, {"label", to_string(e.label)}};
    if (e.category) j["category"] = to_string(*e.category);
    entries.push_back(std::move(j));
  }
  json doc = {{"format_version", manifest.format_version}, {"entries", std::move(entries)}};
  return doc.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text) {
  CorpusManifest m;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object() || !doc.contains("format_version"))
      throw Error(ErrorCode::InvalidManifest, "format_version is mandatory");
    m.format_version = doc.at("format_version").get<int>();
    for (const auto& j : doc.at("entries")) {
      ManifestEntry e;
      e.path = j.at("path").get<std::string>();
      e.sample_id = j.at("sample_id").get<std::string>();
      const auto label = j.at("label").get<std::string>();
      if (label == "benign") e.label = SampleLabel::Benign;
      else if (label == "malicious") e.label = SampleLabel::Malicious;
      else throw Error(ErrorCode::InvalidManifest, "unknown label " + label);
      if (j.contains("category") && !j.at("category").is_null()) {
        const auto name = j.at("category").get<std::string>();
        e.category = parse_category(name);
        if (!e.category) throw Error(ErrorCode::InvalidManifest, "unknown category " + name);
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidManifest, e.what());
  }
  m.validate();
  if (m.entries.empty()) throw Error(ErrorCode::EmptyManifest, "manifest has no entries");
  return m;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  const std::string text = manifest_to_json(manifest);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

std::vector<BinarySample> load_samples(const CorpusManifest& manifest,
                                       const std::filesystem::path& root,
                                       std::optional<SampleLabel> label) {
  std::vector<BinarySample> out;
  for (const auto& e : manifest.entries) {
    if (label && e.label != *label) continue;
    const std::filesystem::path p = root / e.path;
    auto sample = parse_sample(read_file_bytes(p), e.sample_id);
    sample.category = e.category;
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace byteshot::harness
