#include "byteshot/binfile.hpp"

#include <algorithm>

#include "byteshot/error.hpp"

namespace byteshot {

namespace {

constexpr std::uint8_t kMagic0 = 0x4D;
constexpr std::uint8_t kMagic1 = 0x5A;

bool has_pe_magic(ByteView bytes) noexcept {
  return bytes.size() >= 2 && bytes[0] == kMagic0 && bytes[1] == kMagic1;
}

}  // namespace

std::string_view to_string(CategoryLabel c) noexcept {
  switch (c) {
    case CategoryLabel::Adware: return "adware";
    case CategoryLabel::Backdoor: return "backdoor";
    case CategoryLabel::Botnet: return "botnet";
    case CategoryLabel::Dropper: return "dropper";
    case CategoryLabel::Ransomware: return "ransomware";
    case CategoryLabel::Rootkit: return "rootkit";
    case CategoryLabel::Spyware: return "spyware";
    case CategoryLabel::Virus: return "virus";
  }
  return "unknown";
}

std::optional<CategoryLabel> parse_category(std::string_view name) noexcept {
  for (auto c : kAllCategories)
    if (to_string(c) == name) return c;
  return std::nullopt;
}

BinarySample parse_sample(ByteView raw, std::string sample_id) {
  if (raw.empty()) throw Error(ErrorCode::EmptyInput, "sample '" + sample_id + "' has no bytes");
  BinarySample s;
  s.sample_id = std::move(sample_id);
  s.bytes.assign(raw.begin(), raw.end());
  s.format = has_pe_magic(raw) ? SampleFormat::PeLike : SampleFormat::Raw;
  return s;
}

PerturbedSample append_payload(const BinarySample& sample, ByteView payload,
                               const ThreatModel& model) {
  if (payload.size() > model.max_append_bytes) {
    throw Error(ErrorCode::PayloadTooLarge,
                std::to_string(payload.size()) + " bytes exceeds cap of " +
                    std::to_string(model.max_append_bytes));
  }
  PerturbedSample p;
  p.base = sample;
  p.payload.assign(payload.begin(), payload.end());
  p.combined.reserve(sample.bytes.size() + payload.size());
  p.combined.insert(p.combined.end(), sample.bytes.begin(), sample.bytes.end());
  p.combined.insert(p.combined.end(), payload.begin(), payload.end());
  return p;
}

bool verify_integrity(const PerturbedSample& p) noexcept {
  const auto& base = p.base.bytes;
  if (p.combined.size() < base.size()) return false;
  if (!std::equal(base.begin(), base.end(), p.combined.begin())) return false;
  if (p.base.format == SampleFormat::PeLike && !has_pe_magic(p.combined)) return false;
  return true;
}

}  // namespace byteshot
