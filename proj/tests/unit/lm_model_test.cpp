#include <gtest/gtest.h>

#include <cmath>

#include "byteshot/bytelm/model.hpp"
#include "byteshot/error.hpp"
#include "fixtures.hpp"
#include "lm_reference.hpp"

namespace byteshot::bytelm {
namespace {

using testing::random_lm_params;
using testing::random_tokens;
using testing::reference_forward;
using testing::tiny_lm_config;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoFailure;
}

TEST(LMConfig, ValidatesInvariants) {
  auto c = LMConfig::desk();
  EXPECT_NO_THROW(c.validate());
  c.num_heads = 3;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c = LMConfig::desk();
  c.context_len = 1;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  c = LMConfig::desk();
  c.train_iterations = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(LMConfig::preset("full").num_blocks, 12);
  EXPECT_EQ(LMConfig::desk().vocab_size, 65536);
  EXPECT_EQ(LMConfig::desk().train_iterations, 1000);
  EXPECT_EQ(code_of([] { LMConfig::preset("huge"); }), ErrorCode::InvalidConfig);
}

TEST(LMConfig, KeyValueRoundTrip) {
  auto c = LMConfig::toy();
  c.seed = 77;
  c.learning_rate = 0.00123;
  EXPECT_EQ(LMConfig::from_key_values(c.to_key_values()), c);
}

TEST(LMParams, ParameterCountMatchesTensors) {
  for (const auto& c : {tiny_lm_config(), LMConfig::toy()}) {
    const auto p = LMParams<float>::zeros(c);
    std::size_t total = 0;
    for_each_tensor(p, [&](const std::string&, const auto& t) { total += static_cast<std::size_t>(t.size()); });
    EXPECT_EQ(total, c.parameter_count());
  }
}

TEST(LMParams, InitIsSeededWithUnitGains) {
  const auto c = tiny_lm_config();
  const auto a = init_params(c, 4), b = init_params(c, 4), d = init_params(c, 5);
  EXPECT_TRUE(a.token_embedding == b.token_embedding);
  EXPECT_FALSE(a.token_embedding == d.token_embedding);
  EXPECT_TRUE((a.blocks[0].ln1_gain.array() == 1.0f).all());
  EXPECT_TRUE((a.blocks[0].b_ff_in.array() == 0.0f).all());
  const double sd = std::sqrt(a.output.squaredNorm() / static_cast<double>(a.output.size()));
  EXPECT_NEAR(sd, 0.02, 0.01);
}

TEST(LMForward, SingleTokenShapeFullVocab) {
  LMConfig c = tiny_lm_config(LMConfig::kFullVocab);
  const auto p = LMParams<float>::zeros(c);
  const std::vector<Token> t = {0xFFFF};
  const auto logits = lm_forward(p, c, t);
  EXPECT_EQ(logits.rows(), 1);
  EXPECT_EQ(logits.cols(), 65536);
}

TEST(LMForward, HandComputedIdentityBlock) {
  // All block weights zero: each block is the identity, so the logits are the
  // normalised sum of embeddings projected through `output`.
  LMConfig c;
  c.num_blocks = 1;
  c.embed_dim = 4;
  c.num_heads = 1;
  c.context_len = 2;
  c.vocab_size = 4;
  c.ffn_dim = 4;
  auto p = LMParams<double>::zeros(c);
  p.token_embedding(1, 0) = 1.0;
  p.token_embedding(2, 1) = 2.0;
  p.position_embedding(1, 3) = 2.0;
  p.final_gain.setOnes();
  p.output.setIdentity();
  const std::vector<Token> t = {1, 2};
  const auto logits = lm_forward(p, c, t);
  // row 0: LN([1,0,0,0]) = [0.75,-0.25,-0.25,-0.25] / sqrt(0.1875 + 1e-5)
  const double s0 = std::sqrt(0.1875 + 1e-5);
  EXPECT_NEAR(logits(0, 0), 0.75 / s0, 1e-12);
  EXPECT_NEAR(logits(0, 1), -0.25 / s0, 1e-12);
  // row 1: LN([0,2,0,2]) = [-1,1,-1,1] / sqrt(1 + 1e-5)
  const double s1 = std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(logits(1, 0), -1.0 / s1, 1e-12);
  EXPECT_NEAR(logits(1, 3), 1.0 / s1, 1e-12);
}

TEST(LMForward, HandSetTwoTokenAttentionMatchesReference) {
  LMConfig c;
  c.num_blocks = 1;
  c.embed_dim = 4;
  c.num_heads = 1;
  c.context_len = 2;
  c.vocab_size = 3;
  c.ffn_dim = 2;
  auto p = LMParams<double>::zeros(c);
  p.token_embedding << 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, -1;
  p.position_embedding << 0.1, 0, 0, 0, 0, 0.2, 0, 0;
  auto& b = p.blocks[0];
  b.ln1_gain.setOnes();
  b.ln2_gain.setOnes();
  b.w_query.setIdentity();
  b.w_key.setIdentity();
  b.w_key *= 2.0;
  b.w_value.setIdentity();
  b.w_out.setIdentity();
  b.w_out *= 0.5;
  b.w_ff_in << 1, -1, 0.5, 0, 0, 0.5, -1, 1;
  b.w_ff_out << 1, 0, 0, 1, 0, 1, 1, 0;
  b.b_ff_in << 0.1, -0.1;
  p.final_gain.setOnes();
  p.output << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1;
  const std::vector<Token> t = {2, 0};
  const auto got = lm_forward(p, c, t);
  const auto want = reference_forward(p, c, t);
  for (int r = 0; r < 2; ++r)
    for (int v = 0; v < 3; ++v) EXPECT_NEAR(got(r, v), want[r][v], 1e-12);
}

TEST(LMForward, RandomTinyModelsMatchReference) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto c = tiny_lm_config(32);
    c.num_blocks = 1 + static_cast<int>(seed % 2);
    const auto p = random_lm_params<double>(c, seed);
    const auto t = random_tokens(1 + seed % 8, c.vocab_size, seed + 100);
    const auto got = lm_forward(p, c, t);
    const auto want = reference_forward(p, c, t);
    for (std::size_t r = 0; r < t.size(); ++r)
      for (int v = 0; v < c.vocab_size; ++v) ASSERT_NEAR(got(r, v), want[r][v], 1e-10);

    const auto pf = cast_params<float>(p);
    const auto gotf = lm_forward(pf, c, t);
    for (std::size_t r = 0; r < t.size(); ++r)
      for (int v = 0; v < c.vocab_size; ++v) ASSERT_NEAR(gotf(r, v), want[r][v], 1e-4);
  }
}

TEST(LMForward, Errors) {
  const auto c = tiny_lm_config();
  const auto p = LMParams<double>::zeros(c);
  EXPECT_EQ(code_of([&] { lm_forward(p, c, std::vector<Token>{}); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code_of([&] { lm_forward(p, c, std::vector<Token>(9, 1)); }), ErrorCode::ContextOverflow);
  EXPECT_EQ(code_of([&] { lm_forward(p, c, std::vector<Token>{16}); }), ErrorCode::TokenOutOfRange);
  EXPECT_EQ(code_of([&] { lm_loss(p, c, std::vector<Token>{1}); }), ErrorCode::SequenceTooShort);
  EXPECT_EQ(code_of([&] { lm_gradients(p, c, std::vector<Token>{1}); }), ErrorCode::SequenceTooShort);
}

TEST(LMForward, CausalPrefixRowsBitIdentical) {
  const auto c = tiny_lm_config(32);
  const auto p = random_lm_params<float>(c, 9);
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto a = random_tokens(8, c.vocab_size, trial);
    const std::size_t t = trial % 7;
    auto b = a;
    const auto tail = random_tokens(8, c.vocab_size, trial + 1000);
    for (std::size_t i = t + 1; i < b.size(); ++i) b[i] = tail[i];
    const auto la = lm_forward(p, c, a);
    const auto lb = lm_forward(p, c, b);
    ASSERT_TRUE(la.topRows(static_cast<Eigen::Index>(t + 1)) == lb.topRows(static_cast<Eigen::Index>(t + 1)));
    // Truncating the sequence changes the matrix shapes, so earlier rows
    // agree to rounding rather than bitwise.
    const auto lshort = lm_forward(p, c, std::span(a).first(t + 1));
    ASSERT_TRUE(lshort.isApprox(la.topRows(static_cast<Eigen::Index>(t + 1)), 1e-5f));
  }
}

TEST(LMForward, SoftmaxAndAttentionRowsNormalised) {
  auto c = tiny_lm_config(32);
  const auto p = random_lm_params<double>(c, 2, 1.0);
  const auto t = random_tokens(8, c.vocab_size, 3);
  const auto probs = softmax_rows<double>(lm_forward(p, c, t));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) EXPECT_NEAR(probs.row(r).sum(), 1.0, 1e-6);
  for (int h = 0; h < c.num_heads; ++h) {
    const auto w = attention_weights(p, c, t, 0, h);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      EXPECT_NEAR(w.row(i).head(i + 1).sum(), 1.0, 1e-6);
      for (Eigen::Index j = i + 1; j < w.cols(); ++j) EXPECT_EQ(w(i, j), 0.0);
    }
  }
}

TEST(LMLoss, UniformLogitsGiveLogVocab) {
  LMConfig c = tiny_lm_config(LMConfig::kFullVocab);
  const auto p = LMParams<double>::zeros(c);
  const std::vector<Token> t = {1, 500, 65535, 7};
  EXPECT_NEAR(lm_loss(p, c, t), std::log(65536.0), 1e-9);
  EXPECT_NEAR(std::log(65536.0), 11.0904, 1e-4);
}

TEST(LMLoss, PeakedLogitsApproachZero) {
  LMConfig c = tiny_lm_config(4);
  auto p = LMParams<double>::zeros(c);
  p.final_bias(0) = 1.0;
  const std::vector<Token> t = {3, 3, 3};
  double prev = 1e9;
  for (double peak : {1.0, 10.0, 100.0}) {
    p.output.setZero();
    p.output(0, 3) = peak;
    const double loss = lm_loss(p, c, t);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-30);
}

TEST(LMLoss, MatchesScalarRecomputation) {
  const auto c = tiny_lm_config(32);
  const auto p = random_lm_params<double>(c, 21);
  const auto t = random_tokens(8, c.vocab_size, 22);
  EXPECT_NEAR(lm_loss(p, c, t), testing::reference_loss(p, c, t), 1e-10);
}

TEST(LMGradients, FiniteAndUnusedEmbeddingRowZero) {
  const auto c = tiny_lm_config(32);
  const auto p = random_lm_params<double>(c, 31);
  const std::vector<Token> t = {1, 2, 3, 1, 2};
  const auto g = lm_gradients(p, c, t);
  EXPECT_TRUE(all_finite(g.gradients));
  EXPECT_NEAR(g.loss, lm_loss(p, c, t), 1e-12);
  for (int row : {0, 4, 31}) EXPECT_EQ(g.gradients.token_embedding.row(row).squaredNorm(), 0.0);
  EXPECT_GT(g.gradients.token_embedding.row(1).squaredNorm(), 0.0);
  // Positions never reached receive no gradient.
  EXPECT_EQ(g.gradients.position_embedding.row(7).squaredNorm(), 0.0);
}

TEST(LMGradients, CentralDifferencesAgree) {
  auto c = tiny_lm_config(12);
  c.num_blocks = 2;
  auto p = random_lm_params<double>(c, 41);
  const auto t = random_tokens(8, c.vocab_size, 42);
  const auto g = lm_gradients(p, c, t);
  auto views = flat_views(p);
  const auto grads = flat_views(g.gradients);
  constexpr double h = 1e-4;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (std::size_t i = 0; i < views[v].size(); ++i) {
      const double keep = views[v][i];
      views[v][i] = keep + h;
      const double up = lm_loss(p, c, t);
      views[v][i] = keep - h;
      const double down = lm_loss(p, c, t);
      views[v][i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = grads[v][i];
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      ASSERT_LT(err, 1e-3) << "tensor " << v << " index " << i << " fd " << fd << " analytic " << an;
    }
  }
}

}  // namespace
}  // namespace byteshot::bytelm
