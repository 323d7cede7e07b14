#include "byteshot/bytelm/generate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "byteshot/error.hpp"
#include "layers.hpp"

namespace byteshot::bytelm {

IncrementalDecoder::IncrementalDecoder(const LanguageModel& model) : model_(model) {
  const auto& c = model_.config;
  keys_.assign(c.num_blocks, Matrix<float>::Zero(c.context_len, c.embed_dim));
  values_.assign(c.num_blocks, Matrix<float>::Zero(c.context_len, c.embed_dim));
  last_hidden_.assign(c.embed_dim, 0.0f);
  window_.reserve(c.context_len);
}

void IncrementalDecoder::prime(std::span<const Token> tokens) {
  if (tokens.size() > static_cast<std::size_t>(model_.config.context_len))
    throw Error(ErrorCode::ContextOverflow, "prime exceeds context window");
  length_ = 0;
  window_.clear();
  for (Token t : tokens) feed(t);
}

void IncrementalDecoder::push(Token token) {
  const int ctx = model_.config.context_len;
  if (length_ == ctx) {
    const int keep = std::max(1, ctx / 2);
    const std::vector<Token> recent(window_.end() - keep, window_.end());
    prime(recent);
  }
  feed(token);
}

void IncrementalDecoder::feed(Token token) {
  const auto& c = model_.config;
  const auto& p = model_.params;
  if (token >= c.vocab_size)
    throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(token) + " >= vocab_size");
  const int pos = length_;
  const int dh = c.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  Matrix<float> x = p.token_embedding.row(token) + p.position_embedding.row(pos);
  LayerNormCache<float> ln_cache;
  std::vector<float> scores(static_cast<std::size_t>(pos) + 1);
  for (int b = 0; b < c.num_blocks; ++b) {
    const auto& bp = p.blocks[b];
    const Matrix<float> h = layer_norm(x, bp.ln1_gain, bp.ln1_bias, ln_cache);
    const Matrix<float> q = affine(h, bp.w_query, bp.b_query);
    keys_[b].row(pos) = affine(h, bp.w_key, bp.b_key);
    values_[b].row(pos) = affine(h, bp.w_value, bp.b_value);

    Matrix<float> attended = Matrix<float>::Zero(1, c.embed_dim);
    for (int head = 0; head < c.num_heads; ++head) {
      const int off = head * dh;
      float best = -std::numeric_limits<float>::infinity();
      for (int j = 0; j <= pos; ++j) {
        scores[j] = scale * q.row(0).segment(off, dh).dot(keys_[b].row(j).segment(off, dh));
        best = std::max(best, scores[j]);
      }
      float total = 0.0f;
      for (int j = 0; j <= pos; ++j) {
        scores[j] = std::exp(scores[j] - best);
        total += scores[j];
      }
      for (int j = 0; j <= pos; ++j)
        attended.row(0).segment(off, dh) += (scores[j] / total) * values_[b].row(j).segment(off, dh);
    }
    x += affine(attended, bp.w_out, bp.b_out);

    const Matrix<float> h2 = layer_norm(x, bp.ln2_gain, bp.ln2_bias, ln_cache);
    const Matrix<float> act = affine(h2, bp.w_ff_in, bp.b_ff_in).unaryExpr([](float z) { return gelu(z); });
    x += affine(act, bp.w_ff_out, bp.b_ff_out);
  }
  const Matrix<float> out = layer_norm(x, p.final_gain, p.final_bias, ln_cache);
  std::copy(out.data(), out.data() + out.size(), last_hidden_.begin());
  window_.push_back(token);
  ++length_;
}

namespace {

constexpr int kLane = 64;
constexpr int kRowBlock = 4;

/// Accumulates `rows` hidden rows against one lane of the output matrix. The
/// per-element operation order is acc += h[e] * w[e] for e = 0..embed-1, so
/// the result of a row does not depend on which rows share the block.
template <int Rows, int Width>
void project_lane(const float* const* h, const float* w, int embed, int vocab, float* const* out) {
  alignas(64) float acc[Rows][Width] = {};
  for (int e = 0; e < embed; ++e) {
    const float* row = w + static_cast<std::size_t>(e) * vocab;
    for (int r = 0; r < Rows; ++r) {
      const float a = h[r][e];
      for (int l = 0; l < Width; ++l) acc[r][l] += a * row[l];
    }
  }
  for (int r = 0; r < Rows; ++r) std::copy(acc[r], acc[r] + Width, out[r]);
}

void project_lane_partial(const float* h, const float* w, int embed, int vocab, int width, float* out) {
  alignas(64) float acc[kLane] = {};
  for (int e = 0; e < embed; ++e) {
    const float a = h[e];
    const float* row = w + static_cast<std::size_t>(e) * vocab;
    for (int l = 0; l < width; ++l) acc[l] += a * row[l];
  }
  std::copy(acc, acc + width, out);
}

}  // namespace

void project_to_vocab(std::span<const float> hidden, int batch, const Matrix<float>& output,
                      std::span<float> logits) {
  constexpr int kSlice = 1024;
  const int embed = static_cast<int>(output.rows());
  const int vocab = static_cast<int>(output.cols());
  const float* w = output.data();
  const auto hidden_row = [&](int b) { return hidden.data() + static_cast<std::size_t>(b) * embed; };
  const auto logit_row = [&](int b) { return logits.data() + static_cast<std::size_t>(b) * vocab; };

  for (int c0 = 0; c0 < vocab; c0 += kSlice) {
    const int c1 = std::min(vocab, c0 + kSlice);
    for (int b = 0; b < batch; b += kRowBlock) {
      const int rows = std::min(kRowBlock, batch - b);
      for (int c = c0; c < c1; c += kLane) {
        const int width = std::min(kLane, c1 - c);
        if (width == kLane && rows == kRowBlock) {
          const float* h[kRowBlock];
          float* out[kRowBlock];
          for (int r = 0; r < kRowBlock; ++r) {
            h[r] = hidden_row(b + r);
            out[r] = logit_row(b + r) + c;
          }
          project_lane<kRowBlock, kLane>(h, w + c, embed, vocab, out);
        } else if (width == kLane) {
          for (int r = 0; r < rows; ++r) {
            const float* h[1] = {hidden_row(b + r)};
            float* out[1] = {logit_row(b + r) + c};
            project_lane<1, kLane>(h, w + c, embed, vocab, out);
          }
        } else {
          for (int r = 0; r < rows; ++r)
            project_lane_partial(hidden_row(b + r), w + c, embed, vocab, width, logit_row(b + r) + c);
        }
      }
    }
  }
}

namespace {

using Candidate = std::pair<float, int>;

/// Orders candidates best-first: higher logit, then lower id.
bool better(const Candidate& a, const Candidate& b) {
  return a.first > b.first || (a.first == b.first && a.second < b.second);
}

/// Exact top-k by (logit desc, id asc) using a bounded heap. Stripes whose
/// elements cannot beat the current k-th best are skipped with a
/// vectorizable comparison.
std::vector<Candidate> top_k_candidates(std::span<const float> logits, std::size_t k) {
  constexpr std::size_t kStripe = 16;
  const std::size_t n = logits.size();
  std::vector<Candidate> heap;  // front = worst kept candidate
  heap.reserve(k);
  const auto offer = [&](std::size_t i) {
    if (heap.size() < k) {
      heap.emplace_back(logits[i], static_cast<int>(i));
      std::push_heap(heap.begin(), heap.end(), better);
    } else if (logits[i] > heap.front().first) {
      std::pop_heap(heap.begin(), heap.end(), better);
      heap.back() = {logits[i], static_cast<int>(i)};
      std::push_heap(heap.begin(), heap.end(), better);
    }
  };
  std::size_t i = 0;
  for (; i < n && heap.size() < k; ++i) offer(i);
  for (; i + kStripe <= n; i += kStripe) {
    const float bound = heap.front().first;
    int hits = 0;
    for (std::size_t j = 0; j < kStripe; ++j) hits += logits[i + j] > bound ? 1 : 0;
    if (hits == 0) continue;
    for (std::size_t j = 0; j < kStripe; ++j) offer(i + j);
  }
  for (; i < n; ++i) offer(i);
  std::sort(heap.begin(), heap.end(), better);
  return heap;
}

}  // namespace

Token sample_token(std::span<const float> logits, const SamplerConfig& sampler, Rng& rng) {
  const int vocab = static_cast<int>(logits.size());
  if (sampler.greedy) {
    return static_cast<Token>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }

  std::vector<Candidate> candidates;
  if (sampler.top_k == 0 || sampler.top_k >= vocab) {
    candidates.reserve(vocab);
    for (int i = 0; i < vocab; ++i) candidates.emplace_back(logits[i], i);
  } else {
    candidates = top_k_candidates(logits, static_cast<std::size_t>(sampler.top_k));
  }

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [l, id] : candidates) best = std::max(best, static_cast<double>(l));
  std::vector<double> weights(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    weights[i] = std::exp((static_cast<double>(candidates[i].first) - best) / sampler.temperature);
    total += weights[i];
  }
  const double target = uniform_unit(rng) * total;
  double running = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    running += weights[i];
    if (target < running) return static_cast<Token>(candidates[i].second);
  }
  return static_cast<Token>(candidates.back().second);
}

std::vector<std::uint8_t> lm_generate(const LanguageModel& model, const SamplerConfig& sampler,
                                      std::span<const std::uint8_t> prefix) {
  const std::span<const std::uint8_t> prefixes[] = {prefix};
  return std::move(lm_generate_batch(model, std::span(&sampler, 1), prefixes).front());
}

namespace {

constexpr std::size_t kLockStepGroup = 32;

void generate_group(const LanguageModel& model, std::span<const SamplerConfig> samplers,
                    std::span<const std::span<const std::uint8_t>> prefixes,
                    std::span<std::vector<std::uint8_t>> results) {
  const auto& c = model.config;
  const std::size_t n = samplers.size();
  std::vector<IncrementalDecoder> decoders;
  std::vector<Rng> rngs;
  std::vector<std::size_t> wanted(n);
  std::vector<std::vector<Token>> generated(n);
  decoders.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    decoders.emplace_back(model);
    rngs.emplace_back(samplers[i].seed);
    wanted[i] = (samplers[i].max_payload_bytes + 1) / 2;
    if (wanted[i] == 0) continue;
    const auto seq = tokenize(prefixes[i]);
    const std::size_t keep = std::min<std::size_t>(seq.tokens.size(), c.context_len - 1);
    decoders[i].prime(std::span<const Token>(seq.tokens).last(keep));
    generated[i].reserve(wanted[i]);
  }

  std::vector<std::size_t> active;
  std::vector<float> hidden;
  std::vector<float> logits;
  for (;;) {
    active.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (generated[i].size() < wanted[i]) active.push_back(i);
    if (active.empty()) break;

    hidden.resize(active.size() * c.embed_dim);
    logits.resize(active.size() * static_cast<std::size_t>(c.vocab_size));
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto h = decoders[active[a]].last_hidden();
      std::copy(h.begin(), h.end(), hidden.begin() + a * c.embed_dim);
    }
    project_to_vocab(hidden, static_cast<int>(active.size()), model.params.output, logits);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      const std::span<const float> row(logits.data() + a * c.vocab_size, c.vocab_size);
      const Token t = sample_token(row, samplers[i], rngs[i]);
      generated[i].push_back(t);
      if (generated[i].size() < wanted[i]) decoders[i].push(t);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    results[i] = tokens_to_bytes(generated[i]);
    results[i].resize(std::min(results[i].size(), samplers[i].max_payload_bytes));
  }
}

}  // namespace

std::vector<std::vector<std::uint8_t>> lm_generate_batch(
    const LanguageModel& model, std::span<const SamplerConfig> samplers,
    std::span<const std::span<const std::uint8_t>> prefixes) {
  if (samplers.size() != prefixes.size())
    throw Error(ErrorCode::InvalidConfig, "one sampler per prefix required");
  for (std::size_t i = 0; i < samplers.size(); ++i) {
    samplers[i].validate();
    if (prefixes[i].empty()) throw Error(ErrorCode::EmptyPrefix, "generation prefix is empty");
  }
  std::vector<std::vector<std::uint8_t>> results(samplers.size());
  for (std::size_t start = 0; start < samplers.size(); start += kLockStepGroup) {
    const std::size_t count = std::min(kLockStepGroup, samplers.size() - start);
    generate_group(model, samplers.subspan(start, count), prefixes.subspan(start, count),
                   std::span(results).subspan(start, count));
  }
  return results;
}

}  // namespace byteshot::bytelm
