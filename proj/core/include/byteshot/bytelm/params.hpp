#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "byteshot/bytelm/config.hpp"
#include "byteshot/checkpoint.hpp"

namespace byteshot::bytelm {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Pre-layer-norm decoder block: x += Attn(LN1(x)); x += FFN(LN2(x)).
/// Projection matrices are (in_dim x out_dim) and act on row vectors.
template <typename S>
struct DecoderBlockParams {
  RowVector<S> ln1_gain, ln1_bias;
  Matrix<S> w_query, w_key, w_value, w_out;
  RowVector<S> b_query, b_key, b_value, b_out;
  RowVector<S> ln2_gain, ln2_bias;
  Matrix<S> w_ff_in;
  RowVector<S> b_ff_in;
  Matrix<S> w_ff_out;
  RowVector<S> b_ff_out;
};

template <typename S>
struct LMParams {
  Matrix<S> token_embedding;     // vocab x embed
  Matrix<S> position_embedding;  // context x embed
  std::vector<DecoderBlockParams<S>> blocks;
  RowVector<S> final_gain, final_bias;
  Matrix<S> output;  // embed x vocab

  /// All-zero tensors with the shapes `config` implies.
  static LMParams zeros(const LMConfig& config);
};

/// Visits every tensor in declaration order as fn(name, tensor). Works for
/// const and mutable parameter sets.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(std::string("token_embedding"), p.token_embedding);
  fn(std::string("position_embedding"), p.position_embedding);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    fn(pre + "ln1_gain", b.ln1_gain);
    fn(pre + "ln1_bias", b.ln1_bias);
    fn(pre + "w_query", b.w_query);
    fn(pre + "b_query", b.b_query);
    fn(pre + "w_key", b.w_key);
    fn(pre + "b_key", b.b_key);
    fn(pre + "w_value", b.w_value);
    fn(pre + "b_value", b.b_value);
    fn(pre + "w_out", b.w_out);
    fn(pre + "b_out", b.b_out);
    fn(pre + "ln2_gain", b.ln2_gain);
    fn(pre + "ln2_bias", b.ln2_bias);
    fn(pre + "w_ff_in", b.w_ff_in);
    fn(pre + "b_ff_in", b.b_ff_in);
    fn(pre + "w_ff_out", b.w_ff_out);
    fn(pre + "b_ff_out", b.b_ff_out);
  }
  fn(std::string("final_gain"), p.final_gain);
  fn(std::string("final_bias"), p.final_bias);
  fn(std::string("output"), p.output);
}

/// Flat mutable views of every tensor, in declaration order.
template <typename S>
std::vector<std::span<S>> flat_views(LMParams<S>& p) {
  std::vector<std::span<S>> views;
  for_each_tensor(p, [&](const std::string&, auto& t) { views.emplace_back(t.data(), t.size()); });
  return views;
}

template <typename S>
std::vector<std::span<const S>> flat_views(const LMParams<S>& p) {
  std::vector<std::span<const S>> views;
  for_each_tensor(p, [&](const std::string&, const auto& t) { views.emplace_back(t.data(), t.size()); });
  return views;
}

/// Seeded N(0, 0.02^2) weights and embeddings; zero biases; unit layer-norm gains.
LMParams<float> init_params(const LMConfig& config, std::uint64_t seed);

template <typename To, typename From>
LMParams<To> cast_params(const LMParams<From>& p) {
  LMParams<To> out;
  out.token_embedding = p.token_embedding.template cast<To>();
  out.position_embedding = p.position_embedding.template cast<To>();
  out.blocks.resize(p.blocks.size());
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& a = p.blocks[i];
    auto& b = out.blocks[i];
    b.ln1_gain = a.ln1_gain.template cast<To>();
    b.ln1_bias = a.ln1_bias.template cast<To>();
    b.w_query = a.w_query.template cast<To>();
    b.w_key = a.w_key.template cast<To>();
    b.w_value = a.w_value.template cast<To>();
    b.w_out = a.w_out.template cast<To>();
    b.b_query = a.b_query.template cast<To>();
    b.b_key = a.b_key.template cast<To>();
    b.b_value = a.b_value.template cast<To>();
    b.b_out = a.b_out.template cast<To>();
    b.ln2_gain = a.ln2_gain.template cast<To>();
    b.ln2_bias = a.ln2_bias.template cast<To>();
    b.w_ff_in = a.w_ff_in.template cast<To>();
    b.b_ff_in = a.b_ff_in.template cast<To>();
    b.w_ff_out = a.w_ff_out.template cast<To>();
    b.b_ff_out = a.b_ff_out.template cast<To>();
  }
  out.final_gain = p.final_gain.template cast<To>();
  out.final_bias = p.final_bias.template cast<To>();
  out.output = p.output.template cast<To>();
  return out;
}

template <typename S>
bool all_finite(const LMParams<S>& p) {
  bool ok = true;
  for_each_tensor(p, [&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

/// A trained model: configuration plus float parameters.
struct LanguageModel {
  LMConfig config;
  LMParams<float> params;

  TensorContainer to_container() const;
  /// Throws CorruptCheckpoint if the container is not a bytelm checkpoint or
  /// tensor shapes disagree with the embedded config.
  static LanguageModel from_container(const TensorContainer& c);

  void save(const std::filesystem::path& path) const { to_container().save(path); }
  static LanguageModel load(const std::filesystem::path& path) {
    return from_container(TensorContainer::load(path));
  }
};

}  // namespace byteshot::bytelm
