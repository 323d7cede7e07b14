#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "byteshot/checkpoint.hpp"

namespace byteshot::detector {

using DMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DRow = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct DetectorConfig {
  /// Inputs are truncated, or padded with token 256, to this length.
  std::size_t max_input_bytes = 64 * 1024;
  int embed_dim = 8;
  int conv_filters = 32;
  int conv_width = 32;
  int conv_stride = 32;
  int hidden_dim = 32;
  double learning_rate = 1e-3;
  int train_epochs = 6;
  int batch_size = 16;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  /// When set, the threshold is recalibrated after training so the
  /// validation false-positive rate does not exceed this value.
  std::optional<double> calibrate_fpr;

  static constexpr int kPaddingToken = 256;
  static constexpr int kEmbeddingRows = 257;

  /// Number of convolution windows over a max_input_bytes input.
  std::size_t window_count() const;
  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  static DetectorConfig from_key_values(const std::vector<std::pair<std::string, std::string>>& kv);

  bool operator==(const DetectorConfig&) const = default;
};

/// Embedding -> parallel feature/gate convolutions -> feature * sigmoid(gate)
/// -> global max pool over time -> ReLU fully connected -> sigmoid.
struct DetectorParams {
  DMatrix embedding;        // 257 x embed (row 256 = padding)
  DMatrix feature_weights;  // (width * embed) x filters
  DRow feature_bias;
  DMatrix gate_weights;  // (width * embed) x filters
  DRow gate_bias;
  DMatrix fc_weights;  // filters x hidden
  DRow fc_bias;
  DRow output_weights;  // hidden
  DRow output_bias;     // single entry

  static DetectorParams zeros(const DetectorConfig& config);
  bool operator==(const DetectorParams&) const = default;
};

template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(std::string("embedding"), p.embedding);
  fn(std::string("feature_weights"), p.feature_weights);
  fn(std::string("feature_bias"), p.feature_bias);
  fn(std::string("gate_weights"), p.gate_weights);
  fn(std::string("gate_bias"), p.gate_bias);
  fn(std::string("fc_weights"), p.fc_weights);
  fn(std::string("fc_bias"), p.fc_bias);
  fn(std::string("output_weights"), p.output_weights);
  fn(std::string("output_bias"), p.output_bias);
}

DetectorParams init_detector_params(const DetectorConfig& config, std::uint64_t seed);

/// Rounds every parameter to the nearest float, matching checkpoint storage.
void round_to_float(DetectorParams& params);

bool all_finite(const DetectorParams& params);

/// Malicious-class probability in [0, 1]. Only the first max_input_bytes
/// bytes are read. Throws EmptyInput.
double detector_score(const DetectorParams& params, const DetectorConfig& config,
                      std::span<const std::uint8_t> bytes);

struct DetectorLossAndGradients {
  double score;
  double loss;
  DetectorParams gradients;
};

/// Binary cross-entropy against `label` (1 = malicious) with exact gradients.
/// Max-pool ties route the gradient to the earliest window.
DetectorLossAndGradients detector_gradients(const DetectorParams& params,
                                            const DetectorConfig& config,
                                            std::span<const std::uint8_t> bytes, int label);

struct DetectorModel {
  DetectorConfig config;
  DetectorParams params;

  double score(std::span<const std::uint8_t> bytes) const {
    return detector_score(params, config, bytes);
  }

  TensorContainer to_container() const;
  static DetectorModel from_container(const TensorContainer& c);
  void save(const std::filesystem::path& path) const { to_container().save(path); }
  static DetectorModel load(const std::filesystem::path& path) {
    return from_container(TensorContainer::load(path));
  }
};

}  // namespace byteshot::detector
