#include "byteshot/bytelm/config.hpp"

#include <charconv>
#include <cmath>
#include <map>

#include "byteshot/error.hpp"

namespace byteshot::bytelm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, what);
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorCode::CorruptCheckpoint, "missing config key '" + key + "'");
  const std::string& s = it->second;
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::CorruptCheckpoint, "bad value for '" + key + "': " + s);
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

LMConfig LMConfig::desk() { return LMConfig{}; }

LMConfig LMConfig::toy() {
  LMConfig c;
  c.num_blocks = 2;
  c.embed_dim = 32;
  c.num_heads = 2;
  c.context_len = 128;
  c.ffn_dim = 128;
  c.learning_rate = 3e-3;
  return c;
}

LMConfig LMConfig::rnn_style() {
  LMConfig c;
  c.num_blocks = 1;
  c.embed_dim = 16;
  c.num_heads = 1;
  c.context_len = 16;
  c.ffn_dim = 32;
  c.learning_rate = 3e-3;
  return c;
}

LMConfig LMConfig::full_scale() {
  LMConfig c;
  c.num_blocks = 12;
  c.embed_dim = 768;
  c.num_heads = 12;
  c.context_len = 1024;
  c.ffn_dim = 3072;
  c.learning_rate = 2.5e-4;
  return c;
}

LMConfig LMConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "toy") return toy();
  if (name == "rnn-style") return rnn_style();
  if (name == "full") return full_scale();
  throw Error(ErrorCode::InvalidConfig, "unknown LM preset '" + name + "'");
}

std::size_t LMConfig::parameter_count() const {
  const std::size_t e = embed_dim, f = ffn_dim, v = vocab_size, t = context_len;
  const std::size_t per_block = 4 * e            // two layer norms
                                + 4 * (e * e + e)  // q, k, v, out
                                + e * f + f + f * e + e;
  return v * e + t * e + num_blocks * per_block + 2 * e + e * v;
}

void LMConfig::validate() const {
  require(num_blocks >= 1, "num_blocks must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(num_heads >= 1, "num_heads must be >= 1");
  require(embed_dim % num_heads == 0, "num_heads must divide embed_dim");
  require(context_len >= 2, "context_len must be >= 2");
  require(vocab_size >= 1 && vocab_size <= kFullVocab, "vocab_size must be in [1, 65536]");
  require(ffn_dim >= 1, "ffn_dim must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0, "learning_rate must be positive");
  require(train_iterations >= 1, "train_iterations must be >= 1");
}

KeyValues LMConfig::to_key_values() const {
  return {
      {"num_blocks", std::to_string(num_blocks)},
      {"embed_dim", std::to_string(embed_dim)},
      {"num_heads", std::to_string(num_heads)},
      {"context_len", std::to_string(context_len)},
      {"vocab_size", std::to_string(vocab_size)},
      {"ffn_dim", std::to_string(ffn_dim)},
      {"learning_rate", format_double(learning_rate)},
      {"train_iterations", std::to_string(train_iterations)},
      {"seed", std::to_string(seed)},
  };
}

LMConfig LMConfig::from_key_values(const KeyValues& kv) {
  const std::map<std::string, std::string> m(kv.begin(), kv.end());
  LMConfig c;
  c.num_blocks = parse_number<int>(m, "num_blocks");
  c.embed_dim = parse_number<int>(m, "embed_dim");
  c.num_heads = parse_number<int>(m, "num_heads");
  c.context_len = parse_number<int>(m, "context_len");
  c.vocab_size = parse_number<int>(m, "vocab_size");
  c.ffn_dim = parse_number<int>(m, "ffn_dim");
  c.learning_rate = parse_number<double>(m, "learning_rate");
  c.train_iterations = parse_number<int>(m, "train_iterations");
  c.seed = parse_number<std::uint64_t>(m, "seed");
  c.validate();
  return c;
}

void SamplerConfig::validate() const {
  require(greedy || (std::isfinite(temperature) && temperature > 0),
          "temperature must be positive unless greedy decoding is selected");
  require(top_k >= 0, "top_k must be >= 1, or 0 for unlimited");
}

}  // namespace byteshot::bytelm
