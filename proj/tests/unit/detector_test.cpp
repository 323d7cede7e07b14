#include <gtest/gtest.h>

#include <random>

#include "byteshot/detector/oracle.hpp"
#include "byteshot/detector/train.hpp"
#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"
#include "detector_reference.hpp"

namespace byteshot::detector {
namespace {

DetectorConfig tiny_config() {
  DetectorConfig c;
  c.max_input_bytes = 8;
  c.embed_dim = 4;
  c.conv_filters = 2;
  c.conv_width = 2;
  c.conv_stride = 2;
  c.hidden_dim = 3;
  return c;
}

DetectorParams noisy_params(const DetectorConfig& c, std::uint64_t seed) {
  auto p = DetectorParams::zeros(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  for_each_tensor(p, [&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  });
  return p;
}

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> b(n);
  for (auto& v : b) v = static_cast<std::uint8_t>(rng());
  return b;
}

TEST(DetectorScore, HandComputedTinyCase) {
  // embed 4, 2 filters, width 2 on an 8-byte input. Filter 0 reads the first
  // embedding coordinate of the first byte in each window; the gate is open.
  auto c = tiny_config();
  auto p = DetectorParams::zeros(c);
  for (int b = 0; b < 257; ++b) p.embedding(b, 0) = b / 256.0;
  p.feature_weights(0, 0) = 1.0;
  p.gate_bias << 50.0, -50.0;
  p.fc_weights(0, 0) = 2.0;
  p.output_weights(0) = 1.0;
  p.output_bias(0) = -1.0;
  const std::vector<std::uint8_t> bytes = {10, 0, 200, 0, 64, 0, 128, 0};
  // Max over windows of byte/256 is 200/256; filter 1 is closed (~0).
  const double gate = 1.0 / (1.0 + std::exp(-50.0));
  const double pooled0 = 200.0 / 256.0 * gate;
  const double logit = 2.0 * pooled0 - 1.0;
  EXPECT_NEAR(detector_score(p, c, bytes), 1.0 / (1.0 + std::exp(-logit)), 1e-12);
  EXPECT_NEAR(testing::reference_detector_score(p, c, bytes), detector_score(p, c, bytes), 1e-12);
}

TEST(DetectorScore, MatchesBruteForceIncludingPadding) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DetectorConfig c;
    c.max_input_bytes = 64 + seed * 3;
    c.embed_dim = 3;
    c.conv_filters = 4;
    c.conv_width = 3 + seed % 4;
    c.conv_stride = 1 + seed % 5;
    c.hidden_dim = 5;
    const auto p = noisy_params(c, seed);
    const auto bytes = random_bytes(1 + (seed * 17) % 120, seed + 50);
    EXPECT_NEAR(detector_score(p, c, bytes), testing::reference_detector_score(p, c, bytes), 1e-12) << seed;
  }
}

TEST(DetectorScore, RangeTruncationAndErrors) {
  auto c = tiny_config();
  const auto p = noisy_params(c, 3);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const double v = detector_score(p, c, random_bytes(1 + s, s));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  auto a = random_bytes(8, 1);
  auto b = a;
  b.insert(b.end(), {1, 2, 3, 4});
  EXPECT_EQ(detector_score(p, c, a), detector_score(p, c, b));
  try {
    detector_score(p, c, std::vector<std::uint8_t>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(DetectorGradients, CentralDifferencesAgree) {
  DetectorConfig c;
  c.max_input_bytes = 24;
  c.embed_dim = 3;
  c.conv_filters = 3;
  c.conv_width = 4;
  c.conv_stride = 3;
  c.hidden_dim = 4;
  auto p = noisy_params(c, 8);
  const auto bytes = random_bytes(17, 9);
  for (int label : {0, 1}) {
    const auto g = detector_gradients(p, c, bytes, label);
    auto loss = [&] {
      const double s = detector_score(p, c, bytes);
      return label ? -std::log(s) : -std::log(1.0 - s);
    };
    EXPECT_NEAR(g.loss, loss(), 1e-10);
    int tensor = 0;
    for_each_tensor(p, [&](const std::string& name, auto& t) {
      int gi = 0;
      const double* gdata = nullptr;
      for_each_tensor(g.gradients, [&](const std::string&, const auto& gt) {
        if (gi++ == tensor) gdata = gt.data();
      });
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double keep = t.data()[i];
        t.data()[i] = keep + 1e-5;
        const double up = loss();
        t.data()[i] = keep - 1e-5;
        const double down = loss();
        t.data()[i] = keep;
        const double fd = (up - down) / 2e-5;
        const double err = std::abs(fd - gdata[i]) / std::max({std::abs(fd), std::abs(gdata[i]), 1e-6});
        ASSERT_LT(err, 1e-4) << name << "[" << i << "] fd " << fd << " analytic " << gdata[i];
      }
      ++tensor;
    });
  }
}

std::vector<std::vector<std::uint8_t>> separable(int n, bool malicious, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::uint8_t>> out;
  for (int i = 0; i < n; ++i) {
    std::vector<std::uint8_t> f(300 + rng() % 300);
    for (auto& b : f) b = malicious ? static_cast<std::uint8_t>(rng()) : static_cast<std::uint8_t>('a' + rng() % 8);
    out.push_back(f);
  }
  return out;
}

DetectorConfig small_train_config() {
  DetectorConfig c;
  c.max_input_bytes = 1024;
  c.conv_filters = 8;
  c.conv_width = 8;
  c.conv_stride = 8;
  c.hidden_dim = 8;
  c.learning_rate = 1e-2;
  c.train_epochs = 4;
  c.seed = 5;
  return c;
}

TEST(DetectorTrain, LearnsAndIsDeterministic) {
  const auto ben = separable(30, false, 1), mal = separable(30, true, 2);
  const auto c = small_train_config();
  const auto a = detector_train(ben, mal, c);
  const auto b = detector_train(ben, mal, c);
  EXPECT_TRUE(a.model.params == b.model.params);
  EXPECT_EQ(a.metrics.validation_count, 12u);
  EXPECT_EQ(a.metrics.train_count, 48u);
  EXPECT_GE(a.metrics.validation_auc, 0.95);
  EXPECT_EQ(a.metrics.epoch_loss.size(), 4u);
  EXPECT_TRUE(all_finite(a.model.params));
  auto init = init_detector_params(c, derive_seed(c.seed, "detector.init"));
  round_to_float(init);
  EXPECT_FALSE(init == a.model.params);
}

TEST(DetectorTrain, EmptyCorpus) {
  const auto ben = separable(3, false, 1);
  const std::vector<std::vector<std::uint8_t>> none;
  EXPECT_THROW(detector_train(ben, none, small_train_config()), Error);
  EXPECT_THROW(detector_train(none, ben, small_train_config()), Error);
}

TEST(DetectorTrain, CalibrationCapsFalsePositives) {
  auto c = small_train_config();
  c.calibrate_fpr = 0.0;
  const auto r = detector_train(separable(30, false, 1), separable(30, true, 2), c);
  EXPECT_EQ(r.model.config.threshold, r.metrics.threshold);
  EXPECT_GT(r.metrics.threshold, 0.0);
}

TEST(DetectorModel, CheckpointRoundTripPreservesScores) {
  const auto r = detector_train(separable(10, false, 1), separable(10, true, 2), small_train_config());
  const auto bytes = r.model.to_container().serialize();
  const auto back = DetectorModel::from_container(TensorContainer::deserialize(bytes));
  EXPECT_EQ(back.config, r.model.config);
  EXPECT_TRUE(back.params == r.model.params);
  EXPECT_EQ(back.to_container().serialize(), bytes);
}

TEST(Metrics, AucAndCalibration) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.75);
  const std::vector<double> tied = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(roc_auc(tied, std::vector<int>{0, 1}), 0.5);
  const std::vector<double> benign = {0.1, 0.2, 0.3, 0.4};
  const double t = calibrate_threshold(benign, 0.25);
  int fp = 0;
  for (double v : benign) fp += v >= t;
  EXPECT_LE(fp, 1);
  EXPECT_GT(calibrate_threshold(benign, 0.0), 0.4);
}

class FixedScore final : public ScoringModel {
 public:
  explicit FixedScore(double s) : s_(s) {}
  double score(std::span<const std::uint8_t>) const override { return s_; }
  double threshold() const override { return 0.5; }

 private:
  double s_;
};

TEST(Oracle, BudgetSemantics) {
  const FixedScore det(0.7);
  const auto tm = ThreatModel::single_shot();
  const std::vector<std::uint8_t> x = {1};
  auto [v, after] = oracle_query(det, tm, QueryBudget(1), x);
  EXPECT_TRUE(v.is_malicious);
  EXPECT_FALSE(v.score.has_value());
  EXPECT_EQ(after.remaining(), 0);
  EXPECT_EQ(after.consumed(), 1);
  try {
    oracle_query(det, tm, after, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExhausted);
  }
}

TEST(Oracle, ScoreOnlyUnderScoreFeedbackAndThresholdConsistent) {
  ThreatModel tm;
  tm.max_queries = 5;
  tm.feedback = FeedbackMode::ScoreFeedback;
  for (double s : {0.0, 0.49, 0.5, 0.51, 1.0}) {
    const FixedScore det(s);
    const BlackBoxOracle oracle(det, tm);
    QueryBudget b = oracle.fresh_budget();
    const auto v = oracle.query(b, std::vector<std::uint8_t>{1});
    ASSERT_TRUE(v.score.has_value());
    EXPECT_EQ(*v.score, s);
    EXPECT_EQ(v.is_malicious, s >= 0.5);
    EXPECT_EQ(b.remaining() + b.consumed(), 5);
  }
}

TEST(Oracle, BudgetConservedOverSequences) {
  const FixedScore det(0.9);
  ThreatModel tm;
  tm.max_queries = 4;
  const BlackBoxOracle oracle(det, tm);
  QueryBudget b = oracle.fresh_budget();
  for (int i = 0; i < 6; ++i) {
    try {
      oracle.query(b, std::vector<std::uint8_t>{1});
    } catch (const Error&) {
    }
    EXPECT_EQ(b.remaining() + b.consumed(), 4);
    EXPECT_GE(b.remaining(), 0);
  }
  EXPECT_EQ(b.consumed(), 4);
}

TEST(ThreatModel, SingleShotProfile) {
  const auto t = ThreatModel::single_shot();
  EXPECT_EQ(t.max_queries, 1);
  EXPECT_EQ(t.max_append_bytes, 10240u);
  EXPECT_EQ(t.feedback, FeedbackMode::BooleanOnly);
  ThreatModel bad;
  bad.max_queries = 0;
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace byteshot::detector
