#include "byteshot/bytelm/params.hpp"

#include <random>

#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::bytelm {

template <typename S>
LMParams<S> LMParams<S>::zeros(const LMConfig& c) {
  const int e = c.embed_dim, f = c.ffn_dim;
  LMParams<S> p;
  p.token_embedding = Matrix<S>::Zero(c.vocab_size, e);
  p.position_embedding = Matrix<S>::Zero(c.context_len, e);
  p.blocks.resize(c.num_blocks);
  for (auto& b : p.blocks) {
    b.ln1_gain = RowVector<S>::Zero(e);
    b.ln1_bias = RowVector<S>::Zero(e);
    b.w_query = Matrix<S>::Zero(e, e);
    b.w_key = Matrix<S>::Zero(e, e);
    b.w_value = Matrix<S>::Zero(e, e);
    b.w_out = Matrix<S>::Zero(e, e);
    b.b_query = RowVector<S>::Zero(e);
    b.b_key = RowVector<S>::Zero(e);
    b.b_value = RowVector<S>::Zero(e);
    b.b_out = RowVector<S>::Zero(e);
    b.ln2_gain = RowVector<S>::Zero(e);
    b.ln2_bias = RowVector<S>::Zero(e);
    b.w_ff_in = Matrix<S>::Zero(e, f);
    b.b_ff_in = RowVector<S>::Zero(f);
    b.w_ff_out = Matrix<S>::Zero(f, e);
    b.b_ff_out = RowVector<S>::Zero(e);
  }
  p.final_gain = RowVector<S>::Zero(e);
  p.final_bias = RowVector<S>::Zero(e);
  p.output = Matrix<S>::Zero(e, c.vocab_size);
  return p;
}

template struct LMParams<float>;
template struct LMParams<double>;

LMParams<float> init_params(const LMConfig& config, std::uint64_t seed) {
  config.validate();
  auto p = LMParams<float>::zeros(config);
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  for_each_tensor(p, [&](const std::string& name, auto& t) {
    const bool is_gain = name.ends_with("_gain");
    const bool is_bias = name.find(".b_") != std::string::npos || name.ends_with("_bias");
    if (is_gain) {
      t.setOnes();
    } else if (!is_bias) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = normal(rng);
    }
  });
  return p;
}

TensorContainer LanguageModel::to_container() const {
  TensorContainer c;
  c.kind = "bytelm";
  c.header = config.to_key_values();
  for_each_tensor(params, [&](const std::string& name, const auto& t) {
    NamedTensor nt;
    nt.name = name;
    nt.shape = {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())};
    nt.values.assign(t.data(), t.data() + t.size());
    c.tensors.push_back(std::move(nt));
  });
  return c;
}

LanguageModel LanguageModel::from_container(const TensorContainer& c) {
  if (c.kind != "bytelm")
    throw Error(ErrorCode::CorruptCheckpoint, "expected a bytelm checkpoint, found '" + c.kind + "'");
  LanguageModel m;
  m.config = LMConfig::from_key_values(c.header);
  m.params = LMParams<float>::zeros(m.config);
  std::size_t index = 0;
  for_each_tensor(m.params, [&](const std::string& name, auto& t) {
    if (index >= c.tensors.size())
      throw Error(ErrorCode::CorruptCheckpoint, "missing tensor '" + name + "'");
    const NamedTensor& nt = c.tensors[index++];
    if (nt.name != name || nt.shape.size() != 2 ||
        nt.shape[0] != static_cast<std::uint64_t>(t.rows()) ||
        nt.shape[1] != static_cast<std::uint64_t>(t.cols()) ||
        nt.values.size() != static_cast<std::size_t>(t.size()))
      throw Error(ErrorCode::CorruptCheckpoint, "tensor '" + nt.name + "' does not match '" + name + "'");
    std::copy(nt.values.begin(), nt.values.end(), t.data());
  });
  if (index != c.tensors.size()) throw Error(ErrorCode::CorruptCheckpoint, "unexpected extra tensors");
  return m;
}

}  // namespace byteshot::bytelm
