#include "byteshot/detector/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "byteshot/error.hpp"
#include "byteshot/optim.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::detector {

namespace {

struct Example {
  const std::vector<std::uint8_t>* bytes;
  int label;
};

void shuffle(std::vector<Example>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

template <typename Params>
auto flat(Params& p) {
  using Scalar = std::conditional_t<std::is_const_v<Params>, const double, double>;
  std::vector<std::span<Scalar>> views;
  for_each_tensor(p, [&](const std::string&, auto& t) { views.emplace_back(t.data(), t.size()); });
  return views;
}

struct Evaluation {
  double accuracy;
  double auc;
  std::vector<double> scores;
  std::vector<int> labels;
};

Evaluation evaluate(const DetectorModel& model, const std::vector<Example>& set) {
  Evaluation e{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), {}, {}};
  if (set.empty()) return e;
  std::size_t correct = 0;
  for (const auto& ex : set) {
    const double s = model.score(*ex.bytes);
    e.scores.push_back(s);
    e.labels.push_back(ex.label);
    correct += ((s >= model.config.threshold) == (ex.label == 1)) ? 1 : 0;
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  e.auc = roc_auc(e.scores, e.labels);
  return e;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += mean_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(negatives));
}

double calibrate_threshold(std::span<const double> benign_scores, double max_fpr) {
  if (benign_scores.empty()) throw Error(ErrorCode::EmptyCorpus, "no benign scores to calibrate on");
  std::vector<double> sorted(benign_scores.begin(), benign_scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto allowed = static_cast<std::size_t>(std::floor(max_fpr * static_cast<double>(sorted.size())));
  if (allowed >= sorted.size()) return std::nextafter(0.0, 1.0);
  // Everything strictly above sorted[allowed] may be flagged.
  return std::min(std::nextafter(sorted[allowed], 2.0), std::nextafter(1.0, 0.0));
}

DetectorTrainingResult detector_train(std::span<const std::vector<std::uint8_t>> benign,
                                      std::span<const std::vector<std::uint8_t>> malicious,
                                      const DetectorConfig& config) {
  config.validate();
  if (benign.empty() || malicious.empty())
    throw Error(ErrorCode::EmptyCorpus, "detector training needs benign and malicious samples");

  Rng split_rng(derive_seed(config.seed, "detector.split"));
  std::vector<Example> train, validation;
  const auto split_class = [&](std::span<const std::vector<std::uint8_t>> files, int label) {
    std::vector<Example> all;
    for (const auto& f : files) {
      if (f.empty()) throw Error(ErrorCode::EmptyInput, "empty file in detector corpus");
      all.push_back({&f, label});
    }
    shuffle(all, split_rng);
    std::size_t held = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(all.size())));
    if (config.validation_fraction > 0 && held == 0 && all.size() >= 2) held = 1;
    validation.insert(validation.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(held));
    train.insert(train.end(), all.begin() + static_cast<std::ptrdiff_t>(held), all.end());
  };
  split_class(benign, 0);
  split_class(malicious, 1);

  DetectorTrainingResult result;
  result.model.config = config;
  result.model.params = init_detector_params(config, derive_seed(config.seed, "detector.init"));

  AdamOptimizer<double> adam(flat(result.model.params), config.learning_rate);
  Rng order_rng(derive_seed(config.seed, "detector.order"));
  DetectorParams batch_grad = DetectorParams::zeros(config);
  for (int epoch = 0; epoch < config.train_epochs; ++epoch) {
    shuffle(train, order_rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      const std::size_t end = std::min(train.size(), start + static_cast<std::size_t>(config.batch_size));
      for_each_tensor(batch_grad, [](const std::string&, auto& t) { t.setZero(); });
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        auto lg = detector_gradients(result.model.params, config, *train[i].bytes, train[i].label);
        epoch_loss += lg.loss;
        auto dst = flat(batch_grad);
        auto src = flat(std::as_const(lg.gradients));
        for (std::size_t t = 0; t < dst.size(); ++t)
          for (std::size_t k = 0; k < dst[t].size(); ++k) dst[t][k] += scale * src[t][k];
      }
      adam.step(flat(std::as_const(batch_grad)));
      if (!all_finite(result.model.params))
        throw Error(ErrorCode::NonFiniteParameters, "detector epoch " + std::to_string(epoch));
    }
    result.metrics.epoch_loss.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  round_to_float(result.model.params);

  if (config.calibrate_fpr) {
    std::vector<double> benign_scores;
    const auto& source = validation.empty() ? train : validation;
    for (const auto& ex : source)
      if (ex.label == 0) benign_scores.push_back(result.model.score(*ex.bytes));
    result.model.config.threshold = calibrate_threshold(benign_scores, *config.calibrate_fpr);
  }

  const Evaluation tr = evaluate(result.model, train);
  const Evaluation va = evaluate(result.model, validation);
  result.metrics.train_count = train.size();
  result.metrics.validation_count = validation.size();
  result.metrics.train_accuracy = tr.accuracy;
  result.metrics.train_auc = tr.auc;
  result.metrics.validation_accuracy = va.accuracy;
  result.metrics.validation_auc = va.auc;
  result.metrics.threshold = result.model.config.threshold;
  return result;
}

}  // namespace byteshot::detector
