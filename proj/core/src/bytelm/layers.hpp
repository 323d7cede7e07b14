#pragma once

// Row-wise building blocks shared by the batch forward pass and the
// incremental decoder.

#include <cmath>

#include "byteshot/bytelm/model.hpp"

namespace byteshot::bytelm {

template <typename S>
using ColVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct LayerNormCache {
  Matrix<S> normalized;
  ColVector<S> inv_std;
};

template <typename S>
Matrix<S> layer_norm(const Matrix<S>& x, const RowVector<S>& gain, const RowVector<S>& bias,
                     LayerNormCache<S>& cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  cache.normalized.resize(n, d);
  cache.inv_std.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mean = x.row(r).mean();
    const auto centered = x.row(r).array() - mean;
    const S var = centered.square().mean();
    const S inv = S(1) / std::sqrt(var + S(kLayerNormEpsilon));
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = (centered * inv).matrix();
  }
  return ((cache.normalized.array().rowwise() * gain.array()).rowwise() + bias.array()).matrix();
}

template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& dy, const RowVector<S>& gain,
                              const LayerNormCache<S>& cache, RowVector<S>& dgain,
                              RowVector<S>& dbias) {
  dgain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Matrix<S> dxhat = (dy.array().rowwise() * gain.array()).matrix();
  const S d = S(dy.cols());
  Matrix<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const auto xhat = cache.normalized.row(r).array();
    const auto g = dxhat.row(r).array();
    const S mean_g = g.sum() / d;
    const S mean_gx = (g * xhat).sum() / d;
    dx.row(r) = (cache.inv_std(r) * (g - mean_g - xhat * mean_gx)).matrix();
  }
  return dx;
}

template <typename S>
Matrix<S> affine(const Matrix<S>& x, const Matrix<S>& w, const RowVector<S>& b) {
  Matrix<S> y = x * w;
  y.rowwise() += b;
  return y;
}

inline constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluCubic = 0.044715;

/// tanh-approximated GELU.
template <typename S>
S gelu(S x) {
  const S u = S(kGeluScale) * (x + S(kGeluCubic) * x * x * x);
  return S(0.5) * x * (S(1) + std::tanh(u));
}

template <typename S>
S gelu_derivative(S x) {
  const S u = S(kGeluScale) * (x + S(kGeluCubic) * x * x * x);
  const S t = std::tanh(u);
  return S(0.5) * (S(1) + t) +
         S(0.5) * x * (S(1) - t * t) * S(kGeluScale) * (S(1) + S(3 * kGeluCubic) * x * x);
}

}  // namespace byteshot::bytelm
