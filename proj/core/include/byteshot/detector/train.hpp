#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "byteshot/detector/model.hpp"

namespace byteshot::detector {

struct DetectorMetrics {
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
  double train_accuracy = 0;
  double train_auc = 0;
  /// NaN when validation_fraction is 0.
  double validation_accuracy = 0;
  double validation_auc = 0;
  double threshold = 0.5;
  /// Mean binary cross-entropy of each epoch's minibatches.
  std::vector<double> epoch_loss;
};

struct DetectorTrainingResult {
  DetectorModel model;
  DetectorMetrics metrics;
};

/// Adam on binary cross-entropy over a stratified, seeded train/validation
/// split. Final parameters are rounded to float precision so in-memory and
/// checkpointed models score identically.
///
/// Throws EmptyCorpus when either corpus is empty.
DetectorTrainingResult detector_train(std::span<const std::vector<std::uint8_t>> benign,
                                      std::span<const std::vector<std::uint8_t>> malicious,
                                      const DetectorConfig& config);

/// Area under the ROC curve via the rank-sum statistic; ties count one half.
/// Returns NaN unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Smallest threshold t such that the fraction of benign scores >= t is at
/// most max_fpr.
double calibrate_threshold(std::span<const double> benign_scores, double max_fpr);

}  // namespace byteshot::detector
