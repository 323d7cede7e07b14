#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "byteshot/category.hpp"
#include "byteshot/threat_model.hpp"

namespace byteshot {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class SampleFormat { PeLike, Raw };

/// A parsed executable container. Only the two-byte MZ magic is inspected;
/// the content is otherwise opaque.
struct BinarySample {
  std::string sample_id;
  Bytes bytes;
  SampleFormat format = SampleFormat::Raw;
  std::optional<CategoryLabel> category;

  std::size_t length() const noexcept { return bytes.size(); }
};

/// A sample with an end-of-file overlay appended.
struct PerturbedSample {
  BinarySample base;
  Bytes payload;
  /// base bytes followed by payload.
  Bytes combined;

  std::size_t combined_length() const noexcept { return combined.size(); }
};

/// Classifies `raw` as PE-like (leading 0x4D 0x5A) or raw. Throws EmptyInput.
BinarySample parse_sample(ByteView raw, std::string sample_id);

/// Appends `payload` after the last byte of `sample`. Throws PayloadTooLarge
/// when the payload exceeds `model.max_append_bytes` (inclusive cap).
PerturbedSample append_payload(const BinarySample& sample, ByteView payload,
                               const ThreatModel& model);

/// Static functionality check: the original bytes survive bit-exactly as a
/// prefix and, for PE-like samples, the magic is intact.
bool verify_integrity(const PerturbedSample& p) noexcept;

}  // namespace byteshot
