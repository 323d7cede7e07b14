#include "byteshot/bytelm/tokenizer.hpp"

#include <algorithm>

#include "byteshot/error.hpp"

namespace byteshot::bytelm {

TokenSequence tokenize(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::EmptyInput, "cannot tokenize an empty byte sequence");
  TokenSequence seq;
  seq.origin_length_bytes = bytes.size();
  seq.tokens.resize((bytes.size() + 1) / 2);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const std::uint8_t hi = bytes[2 * i];
    const std::uint8_t lo = 2 * i + 1 < bytes.size() ? bytes[2 * i + 1] : 0x00;
    seq.tokens[i] = static_cast<Token>((hi << 8) | lo);
  }
  return seq;
}

std::vector<std::uint8_t> tokens_to_bytes(std::span<const Token> tokens) {
  std::vector<std::uint8_t> out;
  out.reserve(tokens.size() * 2);
  for (Token t : tokens) {
    out.push_back(static_cast<std::uint8_t>(t >> 8));
    out.push_back(static_cast<std::uint8_t>(t & 0xFF));
  }
  return out;
}

std::vector<std::uint8_t> detokenize(const TokenSequence& seq) {
  auto out = tokens_to_bytes(seq.tokens);
  out.resize(std::min(out.size(), seq.origin_length_bytes));
  return out;
}

}  // namespace byteshot::bytelm
