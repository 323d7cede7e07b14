#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace byteshot::bytelm {

/// Two consecutive bytes read big-endian: value = 256 * b0 + b1.
/// Matches the four-hex-digit grouping "AA04 FF44 ...".
using Token = std::uint16_t;

struct TokenSequence {
  std::vector<Token> tokens;
  /// Byte length before padding; 2*|tokens| - 1 when a pad byte was added.
  std::size_t origin_length_bytes = 0;

  bool operator==(const TokenSequence&) const = default;
};

/// Throws EmptyInput for an empty byte sequence. Odd lengths are padded with
/// a single 0x00 byte.
TokenSequence tokenize(std::span<const std::uint8_t> bytes);

/// Inverse of tokenize, truncated to origin_length_bytes.
std::vector<std::uint8_t> detokenize(const TokenSequence& seq);

/// Unpadded byte expansion of raw tokens.
std::vector<std::uint8_t> tokens_to_bytes(std::span<const Token> tokens);

}  // namespace byteshot::bytelm
