#pragma once
// Straight-line scalar evaluation of the decoder stack, written from the
// definitions with no shared code paths. Used to cross-check lm_forward.

#include <cmath>
#include <span>
#include <vector>

#include "byteshot/bytelm/params.hpp"

namespace byteshot::testing {

using Vec = std::vector<double>;

inline Vec ref_layer_norm(const Vec& x, const Vec& gain, const Vec& bias) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * gain[i] + bias[i];
  return y;
}

template <typename M>
Vec ref_affine(const Vec& x, const M& w, const Vec& b) {
  Vec y(static_cast<std::size_t>(w.cols()));
  for (std::size_t o = 0; o < y.size(); ++o) {
    double s = b.empty() ? 0.0 : b[o];
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * static_cast<double>(w(i, o));
    y[o] = s;
  }
  return y;
}

template <typename R>
Vec to_vec(const R& row) {
  Vec v(static_cast<std::size_t>(row.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(row(i));
  return v;
}

inline double ref_gelu(double x) {
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

/// logits[t][v] for every position t.
template <typename S>
std::vector<Vec> reference_forward(const bytelm::LMParams<S>& p, const bytelm::LMConfig& cfg,
                                   std::span<const bytelm::Token> tokens) {
  const std::size_t n = tokens.size();
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t heads = static_cast<std::size_t>(cfg.num_heads);
  const std::size_t hd = d / heads;
  std::vector<Vec> x(n, Vec(d));
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t e = 0; e < d; ++e)
      x[t][e] = static_cast<double>(p.token_embedding(tokens[t], e)) + static_cast<double>(p.position_embedding(t, e));

  for (const auto& b : p.blocks) {
    std::vector<Vec> q(n), k(n), v(n);
    for (std::size_t t = 0; t < n; ++t) {
      const Vec h = ref_layer_norm(x[t], to_vec(b.ln1_gain), to_vec(b.ln1_bias));
      q[t] = ref_affine(h, b.w_query, to_vec(b.b_query));
      k[t] = ref_affine(h, b.w_key, to_vec(b.b_key));
      v[t] = ref_affine(h, b.w_value, to_vec(b.b_value));
    }
    for (std::size_t t = 0; t < n; ++t) {
      Vec attn(d, 0.0);
      for (std::size_t hh = 0; hh < heads; ++hh) {
        Vec s(t + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= t; ++j) {
          double dot = 0;
          for (std::size_t e = 0; e < hd; ++e) dot += q[t][hh * hd + e] * k[j][hh * hd + e];
          s[j] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& val : s) z += (val = std::exp(val - mx));
        for (std::size_t j = 0; j <= t; ++j)
          for (std::size_t e = 0; e < hd; ++e) attn[hh * hd + e] += s[j] / z * v[j][hh * hd + e];
      }
      const Vec o = ref_affine(attn, b.w_out, to_vec(b.b_out));
      for (std::size_t e = 0; e < d; ++e) x[t][e] += o[e];
    }
    for (std::size_t t = 0; t < n; ++t) {
      const Vec h = ref_layer_norm(x[t], to_vec(b.ln2_gain), to_vec(b.ln2_bias));
      Vec f = ref_affine(h, b.w_ff_in, to_vec(b.b_ff_in));
      for (auto& val : f) val = ref_gelu(val);
      const Vec o = ref_affine(f, b.w_ff_out, to_vec(b.b_ff_out));
      for (std::size_t e = 0; e < d; ++e) x[t][e] += o[e];
    }
  }
  std::vector<Vec> logits(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Vec h = ref_layer_norm(x[t], to_vec(p.final_gain), to_vec(p.final_bias));
    logits[t] = ref_affine(h, p.output, Vec{});
  }
  return logits;
}

/// Mean next-token cross-entropy computed from reference_forward.
template <typename S>
double reference_loss(const bytelm::LMParams<S>& p, const bytelm::LMConfig& cfg,
                      std::span<const bytelm::Token> tokens) {
  const auto logits = reference_forward(p, cfg, tokens);
  double total = 0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    double mx = -1e300;
    for (double l : logits[t]) mx = std::max(mx, l);
    double z = 0;
    for (double l : logits[t]) z += std::exp(l - mx);
    total += -(logits[t][tokens[t + 1]] - mx - std::log(z));
  }
  return total / static_cast<double>(tokens.size() - 1);
}

}  // namespace byteshot::testing
