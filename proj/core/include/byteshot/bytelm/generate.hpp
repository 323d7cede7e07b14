#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "byteshot/bytelm/params.hpp"
#include "byteshot/bytelm/tokenizer.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::bytelm {

/// Key/value-cached single-sequence decoder over frozen float parameters.
///
/// Positions are absolute within the current window. When the window is full
/// the decoder re-primes itself on the most recent context_len / 2 tokens.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const LanguageModel& model);

  /// Resets and feeds `tokens` (at most context_len of them).
  void prime(std::span<const Token> tokens);

  /// Appends one token, sliding the window first if it is full.
  void push(Token token);

  /// Final-layer-normed hidden state of the most recent position.
  std::span<const float> last_hidden() const { return last_hidden_; }

  int position() const noexcept { return length_; }

 private:
  void feed(Token token);

  const LanguageModel& model_;
  std::vector<Matrix<float>> keys_;
  std::vector<Matrix<float>> values_;
  std::vector<Token> window_;
  std::vector<float> last_hidden_;
  int length_ = 0;
};

/// logits[b, :] = hidden[b, :] * output for each row b. Each row is computed
/// with the same operation order regardless of batch size, so batched and
/// single-sequence decoding agree bit-for-bit.
void project_to_vocab(std::span<const float> hidden, int batch, const Matrix<float>& output,
                      std::span<float> logits);

/// Draws one token id from a logit row under `sampler`.
Token sample_token(std::span<const float> logits, const SamplerConfig& sampler, Rng& rng);

/// Generates an append payload conditioned on the last context_len - 1 tokens
/// of tokenize(prefix). Output length is min(max_payload_bytes, 2 * tokens).
///
/// Throws EmptyPrefix for an empty prefix.
std::vector<std::uint8_t> lm_generate(const LanguageModel& model, const SamplerConfig& sampler,
                                      std::span<const std::uint8_t> prefix);

/// Lock-step generation for many prefixes; result i equals
/// lm_generate(model, samplers[i], prefixes[i]).
std::vector<std::vector<std::uint8_t>> lm_generate_batch(
    const LanguageModel& model, std::span<const SamplerConfig> samplers,
    std::span<const std::span<const std::uint8_t>> prefixes);

}  // namespace byteshot::bytelm
