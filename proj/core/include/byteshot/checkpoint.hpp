#pragma once

// Versioned tensor container shared by the language-model and detector
// checkpoints.
//
// Layout (all integers little-endian):
//   magic        8 bytes  "BSHTNSR\0"
//   version      u32      kFormatVersion
//   kind         u32 length + UTF-8 bytes       ("bytelm", "detector", ...)
//   header       u32 count, then count x (u32 key len, key, u32 value len, value)
//   tensors      u32 count, then per tensor:
//                  u32 name len, name, u32 rank, rank x u64 dims,
//                  prod(dims) x f32 (IEEE-754, little-endian)
// Tensors appear in the order the owning model declares them.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace byteshot {

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

struct TensorContainer {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string kind;
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<NamedTensor> tensors;

  /// Returns the header value for `key`; throws CorruptCheckpoint when absent.
  const std::string& header_value(const std::string& key) const;
  /// Returns the tensor named `name`; throws CorruptCheckpoint when absent.
  const NamedTensor& tensor(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static TensorContainer deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  /// Throws MissingCheckpoint when the file does not exist.
  static TensorContainer load(const std::filesystem::path& path);
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Hex FNV-1a fingerprint of a file's contents.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace byteshot
