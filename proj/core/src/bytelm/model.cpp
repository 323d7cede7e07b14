#include "byteshot/bytelm/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "byteshot/error.hpp"
#include "layers.hpp"

namespace byteshot::bytelm {

namespace {

template <typename S>
struct BlockCache {
  LayerNormCache<S> ln1;
  Matrix<S> ln1_out;
  Matrix<S> query, key, value;
  std::vector<Matrix<S>> probs;  // one n x n lower-triangular matrix per head
  Matrix<S> attended;
  LayerNormCache<S> ln2;
  Matrix<S> ln2_out;
  Matrix<S> ff_pre;
  Matrix<S> ff_act;
};

template <typename S>
struct ForwardCache {
  std::vector<BlockCache<S>> blocks;
  LayerNormCache<S> final_ln;
  Matrix<S> final_out;
};

void check_tokens(const LMConfig& config, std::span<const Token> tokens) {
  if (tokens.empty()) throw Error(ErrorCode::EmptyInput, "empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(config.context_len)) {
    throw Error(ErrorCode::ContextOverflow, std::to_string(tokens.size()) + " tokens exceed context of " +
                                                std::to_string(config.context_len));
  }
  for (Token t : tokens) {
    if (t >= config.vocab_size)
      throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(t) + " >= vocab_size");
  }
}

template <typename S>
Matrix<S> causal_attention(const Matrix<S>& q, const Matrix<S>& k, const Matrix<S>& v,
                           int num_heads, std::vector<Matrix<S>>& probs) {
  const Eigen::Index n = q.rows();
  const int dh = static_cast<int>(q.cols()) / num_heads;
  const S scale = S(1) / std::sqrt(S(dh));
  Matrix<S> out = Matrix<S>::Zero(n, q.cols());
  probs.assign(num_heads, Matrix<S>::Zero(n, n));
  for (int h = 0; h < num_heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
    Matrix<S>& p = probs[h];
    for (Eigen::Index i = 0; i < n; ++i) {
      S best = -std::numeric_limits<S>::infinity();
      for (Eigen::Index j = 0; j <= i; ++j) {
        p(i, j) = scale * q.row(i).segment(off, dh).dot(k.row(j).segment(off, dh));
        best = std::max(best, p(i, j));
      }
      S total = 0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        p(i, j) = std::exp(p(i, j) - best);
        total += p(i, j);
      }
      for (Eigen::Index j = 0; j <= i; ++j) {
        p(i, j) /= total;
        out.row(i).segment(off, dh) += p(i, j) * v.row(j).segment(off, dh);
      }
    }
  }
  return out;
}

template <typename S>
Matrix<S> forward_impl(const LMParams<S>& params, const LMConfig& config,
                       std::span<const Token> tokens, ForwardCache<S>& cache) {
  check_tokens(config, tokens);
  const auto n = static_cast<Eigen::Index>(tokens.size());

  Matrix<S> x(n, config.embed_dim);
  for (Eigen::Index t = 0; t < n; ++t)
    x.row(t) = params.token_embedding.row(tokens[t]) + params.position_embedding.row(t);

  cache.blocks.resize(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& bp = params.blocks[b];
    auto& bc = cache.blocks[b];

    bc.ln1_out = layer_norm(x, bp.ln1_gain, bp.ln1_bias, bc.ln1);
    bc.query = affine(bc.ln1_out, bp.w_query, bp.b_query);
    bc.key = affine(bc.ln1_out, bp.w_key, bp.b_key);
    bc.value = affine(bc.ln1_out, bp.w_value, bp.b_value);
    bc.attended = causal_attention(bc.query, bc.key, bc.value, config.num_heads, bc.probs);
    x += affine(bc.attended, bp.w_out, bp.b_out);

    bc.ln2_out = layer_norm(x, bp.ln2_gain, bp.ln2_bias, bc.ln2);
    bc.ff_pre = affine(bc.ln2_out, bp.w_ff_in, bp.b_ff_in);
    bc.ff_act = bc.ff_pre.unaryExpr([](S z) { return gelu(z); });
    x += affine(bc.ff_act, bp.w_ff_out, bp.b_ff_out);
  }

  cache.final_out = layer_norm(x, params.final_gain, params.final_bias, cache.final_ln);
  return cache.final_out * params.output;
}

}  // namespace

template <typename S>
Matrix<S> lm_forward(const LMParams<S>& params, const LMConfig& config,
                     std::span<const Token> tokens) {
  ForwardCache<S> cache;
  return forward_impl(params, config, tokens, cache);
}

template <typename S>
Matrix<S> softmax_rows(const Matrix<S>& logits) {
  Matrix<S> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const S best = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - best).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename S>
S lm_loss(const LMParams<S>& params, const LMConfig& config, std::span<const Token> tokens) {
  if (tokens.size() < 2) throw Error(ErrorCode::SequenceTooShort, "loss needs at least two tokens");
  const Matrix<S> logits = lm_forward(params, config, tokens);
  const auto m = static_cast<Eigen::Index>(tokens.size()) - 1;
  S total = 0;
  for (Eigen::Index t = 0; t < m; ++t) {
    const S best = logits.row(t).maxCoeff();
    const S lse = best + std::log((logits.row(t).array() - best).exp().sum());
    total += lse - logits(t, tokens[t + 1]);
  }
  return total / S(m);
}

template <typename S>
LossAndGradients<S> lm_gradients(const LMParams<S>& params, const LMConfig& config,
                                 std::span<const Token> tokens) {
  if (tokens.size() < 2) throw Error(ErrorCode::SequenceTooShort, "gradients need at least two tokens");
  ForwardCache<S> cache;
  Matrix<S> dlogits = forward_impl(params, config, tokens, cache);
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index m = n - 1;
  const S inv_m = S(1) / S(m);

  // Logits are overwritten in place with d(loss)/d(logits).
  S loss = 0;
  for (Eigen::Index t = 0; t < m; ++t) {
    auto row = dlogits.row(t);
    const Token target = tokens[t + 1];
    const S best = row.maxCoeff();
    const S target_logit = row(target);
    row = (row.array() - best).exp().matrix();
    const S total = row.sum();
    loss += best + std::log(total) - target_logit;
    row *= inv_m / total;
    row(target) -= inv_m;
  }
  dlogits.row(n - 1).setZero();
  loss *= inv_m;

  LossAndGradients<S> result{loss, LMParams<S>::zeros(config)};
  LMParams<S>& g = result.gradients;

  g.output.noalias() = cache.final_out.transpose() * dlogits;
  Matrix<S> dfinal = dlogits * params.output.transpose();
  dlogits.resize(0, 0);
  Matrix<S> dx = layer_norm_backward(dfinal, params.final_gain, cache.final_ln, g.final_gain, g.final_bias);

  const int dh = config.head_dim();
  const S scale = S(1) / std::sqrt(S(dh));
  for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
    const auto& bp = params.blocks[bi];
    auto& bg = g.blocks[bi];
    const auto& bc = cache.blocks[bi];

    // Feed-forward branch.
    bg.b_ff_out += dx.colwise().sum();
    bg.w_ff_out.noalias() += bc.ff_act.transpose() * dx;
    Matrix<S> dpre = dx * bp.w_ff_out.transpose();
    dpre.array() *= bc.ff_pre.unaryExpr([](S z) { return gelu_derivative(z); }).array();
    bg.b_ff_in += dpre.colwise().sum();
    bg.w_ff_in.noalias() += bc.ln2_out.transpose() * dpre;
    const Matrix<S> dln2 = dpre * bp.w_ff_in.transpose();
    Matrix<S> dmid = dx + layer_norm_backward(dln2, bp.ln2_gain, bc.ln2, bg.ln2_gain, bg.ln2_bias);

    // Attention branch.
    bg.b_out += dmid.colwise().sum();
    bg.w_out.noalias() += bc.attended.transpose() * dmid;
    const Matrix<S> dattended = dmid * bp.w_out.transpose();

    Matrix<S> dq = Matrix<S>::Zero(n, config.embed_dim);
    Matrix<S> dk = Matrix<S>::Zero(n, config.embed_dim);
    Matrix<S> dv = Matrix<S>::Zero(n, config.embed_dim);
    std::vector<S> dprob(static_cast<std::size_t>(n));
    for (int h = 0; h < config.num_heads; ++h) {
      const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
      const Matrix<S>& p = bc.probs[h];
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto dout = dattended.row(i).segment(off, dh);
        S weighted = 0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          dprob[j] = dout.dot(bc.value.row(j).segment(off, dh));
          weighted += p(i, j) * dprob[j];
        }
        for (Eigen::Index j = 0; j <= i; ++j) {
          dv.row(j).segment(off, dh) += p(i, j) * dout;
          const S dscore = scale * p(i, j) * (dprob[j] - weighted);
          dq.row(i).segment(off, dh) += dscore * bc.key.row(j).segment(off, dh);
          dk.row(j).segment(off, dh) += dscore * bc.query.row(i).segment(off, dh);
        }
      }
    }
    bg.b_query += dq.colwise().sum();
    bg.b_key += dk.colwise().sum();
    bg.b_value += dv.colwise().sum();
    bg.w_query.noalias() += bc.ln1_out.transpose() * dq;
    bg.w_key.noalias() += bc.ln1_out.transpose() * dk;
    bg.w_value.noalias() += bc.ln1_out.transpose() * dv;
    Matrix<S> dln1 = dq * bp.w_query.transpose();
    dln1.noalias() += dk * bp.w_key.transpose();
    dln1.noalias() += dv * bp.w_value.transpose();
    dx = dmid + layer_norm_backward(dln1, bp.ln1_gain, bc.ln1, bg.ln1_gain, bg.ln1_bias);
  }

  for (Eigen::Index t = 0; t < n; ++t) {
    g.token_embedding.row(tokens[t]) += dx.row(t);
    g.position_embedding.row(t) += dx.row(t);
  }
  return result;
}

template <typename S>
Matrix<S> attention_weights(const LMParams<S>& params, const LMConfig& config,
                            std::span<const Token> tokens, int block, int head) {
  ForwardCache<S> cache;
  forward_impl(params, config, tokens, cache);
  return cache.blocks.at(static_cast<std::size_t>(block)).probs.at(static_cast<std::size_t>(head));
}

#define BYTESHOT_INSTANTIATE(S)                                                                  \
  template Matrix<S> lm_forward<S>(const LMParams<S>&, const LMConfig&, std::span<const Token>); \
  template S lm_loss<S>(const LMParams<S>&, const LMConfig&, std::span<const Token>);            \
  template LossAndGradients<S> lm_gradients<S>(const LMParams<S>&, const LMConfig&,              \
                                               std::span<const Token>);                          \
  template Matrix<S> softmax_rows<S>(const Matrix<S>&);                                          \
  template Matrix<S> attention_weights<S>(const LMParams<S>&, const LMConfig&,                   \
                                          std::span<const Token>, int, int);

BYTESHOT_INSTANTIATE(float)
BYTESHOT_INSTANTIATE(double)

#undef BYTESHOT_INSTANTIATE

}  // namespace byteshot::bytelm
