#pragma once

#include <random>
#include <vector>

#include "byteshot/bytelm/params.hpp"
#include "byteshot/bytelm/tokenizer.hpp"

namespace byteshot::testing {

/// Reduced-vocabulary model small enough for exhaustive finite differences.
inline bytelm::LMConfig tiny_lm_config(int vocab = 16) {
  bytelm::LMConfig c;
  c.num_blocks = 1;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.context_len = 8;
  c.vocab_size = vocab;
  c.ffn_dim = 12;
  c.learning_rate = 1e-2;
  c.train_iterations = 10;
  return c;
}

/// Every tensor (gains and biases included) filled with N(0, scale^2) noise;
/// layer-norm gains are centred on one.
template <typename S>
bytelm::LMParams<S> random_lm_params(const bytelm::LMConfig& config, std::uint64_t seed, double scale = 0.3) {
  auto p = bytelm::LMParams<S>::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  bytelm::for_each_tensor(p, [&](const std::string& name, auto& t) {
    const bool gain = name.find("gain") != std::string::npos;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>((gain ? 1.0 : 0.0) + n(rng));
  });
  return p;
}

inline std::vector<bytelm::Token> random_tokens(std::size_t n, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<bytelm::Token> t(n);
  for (auto& v : t) v = static_cast<bytelm::Token>(rng() % static_cast<std::uint64_t>(vocab));
  return t;
}

}  // namespace byteshot::testing
