#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace byteshot::bytelm {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Shape and training hyperparameters of the causal byte-pair transformer.
struct LMConfig {
  static constexpr int kFullVocab = 65536;

  int num_blocks = 2;
  int embed_dim = 64;
  int num_heads = 4;
  int context_len = 256;
  /// Fixed at 65,536 for real use. Smaller values exist only so gradient
  /// checks can run on models with a few thousand parameters; tokens must
  /// then be < vocab_size.
  int vocab_size = kFullVocab;
  int ffn_dim = 256;
  double learning_rate = 1e-3;
  int train_iterations = 1000;
  std::uint64_t seed = 0;

  /// Desk-scale default: 2 blocks, 64-wide, 256-token context.
  static LMConfig desk();
  /// 2 blocks, 32-wide; cheap enough for a 1,000-step run in about a minute.
  static LMConfig toy();
  /// Single-block, short-context generator used as the weaker baseline.
  static LMConfig rnn_style();
  /// 12 blocks, GPT-2-small-like width.
  static LMConfig full_scale();
  /// Looks up a preset by name ("desk", "toy", "rnn-style", "full").
  static LMConfig preset(const std::string& name);

  int head_dim() const { return embed_dim / num_heads; }
  std::size_t parameter_count() const;

  /// Throws InvalidConfig on any violated invariant.
  void validate() const;

  KeyValues to_key_values() const;
  static LMConfig from_key_values(const KeyValues& kv);

  bool operator==(const LMConfig&) const = default;
};

struct SamplerConfig {
  double temperature = 1.0;
  /// 0 = unlimited.
  int top_k = 40;
  /// Argmax decoding (the temperature -> 0 limit); ties resolve to the lowest id.
  bool greedy = false;
  std::size_t max_payload_bytes = 10 * 1024;
  std::uint64_t seed = 0;

  void validate() const;
};

}  // namespace byteshot::bytelm
