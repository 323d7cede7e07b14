#pragma once

#include <span>

#include "byteshot/bytelm/params.hpp"
#include "byteshot/bytelm/tokenizer.hpp"

namespace byteshot::bytelm {

/// Causal forward pass. Row t of the result holds the unnormalized
/// next-token scores given tokens[0..t].
///
/// Throws EmptyInput for an empty sequence, ContextOverflow when
/// tokens.size() > context_len and TokenOutOfRange for ids >= vocab_size.
template <typename S>
Matrix<S> lm_forward(const LMParams<S>& params, const LMConfig& config,
                     std::span<const Token> tokens);

/// Mean next-token cross-entropy over positions 0..n-2.
/// Throws SequenceTooShort when fewer than two tokens are given.
template <typename S>
S lm_loss(const LMParams<S>& params, const LMConfig& config, std::span<const Token> tokens);

template <typename S>
struct LossAndGradients {
  S loss;
  LMParams<S> gradients;
};

/// Loss plus exact gradients for every parameter tensor (manual backprop).
template <typename S>
LossAndGradients<S> lm_gradients(const LMParams<S>& params, const LMConfig& config,
                                 std::span<const Token> tokens);

/// Row-wise softmax of `logits`; exposed for property checks.
template <typename S>
Matrix<S> softmax_rows(const Matrix<S>& logits);

/// Attention probabilities of one head in one block, for inspection.
/// Row i sums to one over columns 0..i and is zero beyond i.
template <typename S>
Matrix<S> attention_weights(const LMParams<S>& params, const LMConfig& config,
                            std::span<const Token> tokens, int block, int head);

inline constexpr double kLayerNormEpsilon = 1e-5;

}  // namespace byteshot::bytelm
