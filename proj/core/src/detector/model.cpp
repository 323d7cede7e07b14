#include "byteshot/detector/model.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <random>

#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::detector {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, what);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_value(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(ErrorCode::CorruptCheckpoint, "missing config key '" + key + "'");
  T value{};
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::CorruptCheckpoint, "bad value for '" + key + "': " + s);
  return value;
}

/// Forward-pass intermediates needed by backprop.
struct Forward {
  DMatrix windows;  // im2col rows; the final row is the shared all-padding window if present
  std::size_t real_windows = 0;
  bool has_padding_window = false;
  DMatrix feature;
  DMatrix gate_pre;
  DRow pooled;
  std::vector<Eigen::Index> argmax;
  DRow hidden_pre;
  DRow hidden;
  double logit = 0;
  double score = 0;
};

int byte_at(std::span<const std::uint8_t> bytes, std::size_t limit, std::size_t pos) {
  return pos < limit ? bytes[pos] : DetectorConfig::kPaddingToken;
}

Forward run_forward(const DetectorParams& p, const DetectorConfig& c, std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorCode::EmptyInput, "detector input is empty");
  const std::size_t limit = std::min(bytes.size(), c.max_input_bytes);
  const std::size_t total_windows = c.window_count();
  const auto stride = static_cast<std::size_t>(c.conv_stride);
  const int width = c.conv_width, embed = c.embed_dim;

  Forward f;
  // Windows starting at or beyond the last real byte see only padding and
  // are identical, so one representative stands in for all of them.
  f.real_windows = std::min(total_windows, (limit + stride - 1) / stride);
  f.has_padding_window = f.real_windows < total_windows;
  const std::size_t rows = f.real_windows + (f.has_padding_window ? 1 : 0);

  f.windows.resize(static_cast<Eigen::Index>(rows), width * embed);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int k = 0; k < width; ++k) {
      const int id = r < f.real_windows ? byte_at(bytes, limit, r * stride + k) : DetectorConfig::kPaddingToken;
      f.windows.row(r).segment(k * embed, embed) = p.embedding.row(id);
    }
  }
  f.feature = f.windows * p.feature_weights;
  f.feature.rowwise() += p.feature_bias;
  f.gate_pre = f.windows * p.gate_weights;
  f.gate_pre.rowwise() += p.gate_bias;

  f.pooled.resize(c.conv_filters);
  f.argmax.assign(c.conv_filters, 0);
  for (int j = 0; j < c.conv_filters; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < f.feature.rows(); ++r) {
      const double g = f.feature(r, j) * sigmoid(f.gate_pre(r, j));
      if (g > best) {
        best = g;
        f.argmax[j] = r;
      }
    }
    f.pooled(j) = best;
  }
  f.hidden_pre = f.pooled * p.fc_weights + p.fc_bias;
  f.hidden = f.hidden_pre.cwiseMax(0.0);
  f.logit = f.hidden.dot(p.output_weights) + p.output_bias(0);
  f.score = sigmoid(f.logit);
  return f;
}

}  // namespace

std::size_t DetectorConfig::window_count() const {
  return (max_input_bytes - conv_width) / conv_stride + 1;
}

void DetectorConfig::validate() const {
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(conv_filters >= 1, "conv_filters must be >= 1");
  require(conv_width >= 1, "conv_width must be >= 1");
  require(conv_stride >= 1, "conv_stride must be >= 1");
  require(hidden_dim >= 1, "hidden_dim must be >= 1");
  require(max_input_bytes >= static_cast<std::size_t>(conv_width), "max_input_bytes must be >= conv_width");
  require(std::isfinite(learning_rate) && learning_rate > 0, "learning_rate must be positive");
  require(train_epochs >= 1, "train_epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(validation_fraction >= 0 && validation_fraction < 1, "validation_fraction must be in [0, 1)");
  require(threshold > 0 && threshold < 1, "threshold must be in (0, 1)");
  require(!calibrate_fpr || (*calibrate_fpr >= 0 && *calibrate_fpr < 1), "calibrate_fpr must be in [0, 1)");
}

std::vector<std::pair<std::string, std::string>> DetectorConfig::to_key_values() const {
  return {
      {"max_input_bytes", std::to_string(max_input_bytes)},
      {"embed_dim", std::to_string(embed_dim)},
      {"conv_filters", std::to_string(conv_filters)},
      {"conv_width", std::to_string(conv_width)},
      {"conv_stride", std::to_string(conv_stride)},
      {"hidden_dim", std::to_string(hidden_dim)},
      {"learning_rate", format_double(learning_rate)},
      {"train_epochs", std::to_string(train_epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"validation_fraction", format_double(validation_fraction)},
      {"seed", std::to_string(seed)},
      {"threshold", format_double(threshold)},
      {"calibrate_fpr", calibrate_fpr ? format_double(*calibrate_fpr) : std::string("none")},
  };
}

DetectorConfig DetectorConfig::from_key_values(const std::vector<std::pair<std::string, std::string>>& kv) {
  const std::map<std::string, std::string> m(kv.begin(), kv.end());
  DetectorConfig c;
  c.max_input_bytes = parse_value<std::size_t>(m, "max_input_bytes");
  c.embed_dim = parse_value<int>(m, "embed_dim");
  c.conv_filters = parse_value<int>(m, "conv_filters");
  c.conv_width = parse_value<int>(m, "conv_width");
  c.conv_stride = parse_value<int>(m, "conv_stride");
  c.hidden_dim = parse_value<int>(m, "hidden_dim");
  c.learning_rate = parse_value<double>(m, "learning_rate");
  c.train_epochs = parse_value<int>(m, "train_epochs");
  c.batch_size = parse_value<int>(m, "batch_size");
  c.validation_fraction = parse_value<double>(m, "validation_fraction");
  c.seed = parse_value<std::uint64_t>(m, "seed");
  c.threshold = parse_value<double>(m, "threshold");
  const auto fpr = m.find("calibrate_fpr");
  if (fpr != m.end() && fpr->second != "none") c.calibrate_fpr = parse_value<double>(m, "calibrate_fpr");
  c.validate();
  return c;
}

DetectorParams DetectorParams::zeros(const DetectorConfig& c) {
  const int patch = c.conv_width * c.embed_dim;
  DetectorParams p;
  p.embedding = DMatrix::Zero(DetectorConfig::kEmbeddingRows, c.embed_dim);
  p.feature_weights = DMatrix::Zero(patch, c.conv_filters);
  p.feature_bias = DRow::Zero(c.conv_filters);
  p.gate_weights = DMatrix::Zero(patch, c.conv_filters);
  p.gate_bias = DRow::Zero(c.conv_filters);
  p.fc_weights = DMatrix::Zero(c.conv_filters, c.hidden_dim);
  p.fc_bias = DRow::Zero(c.hidden_dim);
  p.output_weights = DRow::Zero(c.hidden_dim);
  p.output_bias = DRow::Zero(1);
  return p;
}

DetectorParams init_detector_params(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  DetectorParams p = DetectorParams::zeros(config);
  Rng rng(seed);
  const auto fill = [&](auto& t, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = normal(rng);
  };
  const double patch = static_cast<double>(config.conv_width * config.embed_dim);
  fill(p.embedding, 1.0);
  fill(p.feature_weights, 1.0 / std::sqrt(patch));
  fill(p.gate_weights, 1.0 / std::sqrt(patch));
  fill(p.fc_weights, std::sqrt(2.0 / config.conv_filters));
  fill(p.output_weights, 1.0 / std::sqrt(static_cast<double>(config.hidden_dim)));
  round_to_float(p);
  return p;
}

void round_to_float(DetectorParams& params) {
  for_each_tensor(params, [](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<double>(static_cast<float>(t.data()[i]));
  });
}

bool all_finite(const DetectorParams& params) {
  bool ok = true;
  for_each_tensor(params, [&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

double detector_score(const DetectorParams& params, const DetectorConfig& config,
                      std::span<const std::uint8_t> bytes) {
  return run_forward(params, config, bytes).score;
}

DetectorLossAndGradients detector_gradients(const DetectorParams& p, const DetectorConfig& c,
                                            std::span<const std::uint8_t> bytes, int label) {
  const Forward f = run_forward(p, c, bytes);
  const double y = label != 0 ? 1.0 : 0.0;
  const double loss = std::max(f.logit, 0.0) - y * f.logit + std::log1p(std::exp(-std::abs(f.logit)));

  DetectorLossAndGradients out{f.score, loss, DetectorParams::zeros(c)};
  DetectorParams& g = out.gradients;

  const double dlogit = f.score - y;
  g.output_weights = dlogit * f.hidden;
  g.output_bias(0) = dlogit;
  DRow dhidden = dlogit * p.output_weights;
  for (Eigen::Index h = 0; h < dhidden.size(); ++h)
    if (f.hidden_pre(h) <= 0) dhidden(h) = 0;
  g.fc_weights = f.pooled.transpose() * dhidden;
  g.fc_bias = dhidden;
  const DRow dpooled = dhidden * p.fc_weights.transpose();

  DMatrix dwindows = DMatrix::Zero(f.windows.rows(), f.windows.cols());
  std::vector<char> touched(static_cast<std::size_t>(f.windows.rows()), 0);
  for (int j = 0; j < c.conv_filters; ++j) {
    const Eigen::Index r = f.argmax[j];
    const double a = f.feature(r, j);
    const double s = sigmoid(f.gate_pre(r, j));
    const double dfeature = dpooled(j) * s;
    const double dgate = dpooled(j) * a * s * (1.0 - s);
    g.feature_weights.col(j) += dfeature * f.windows.row(r).transpose();
    g.feature_bias(j) += dfeature;
    g.gate_weights.col(j) += dgate * f.windows.row(r).transpose();
    g.gate_bias(j) += dgate;
    dwindows.row(r) += dfeature * p.feature_weights.col(j).transpose() + dgate * p.gate_weights.col(j).transpose();
    touched[static_cast<std::size_t>(r)] = 1;
  }

  const std::size_t limit = std::min(bytes.size(), c.max_input_bytes);
  const int embed = c.embed_dim;
  for (Eigen::Index r = 0; r < dwindows.rows(); ++r) {
    if (!touched[static_cast<std::size_t>(r)]) continue;
    for (int k = 0; k < c.conv_width; ++k) {
      const auto row = static_cast<std::size_t>(r);
      const int id = row < f.real_windows ? byte_at(bytes, limit, row * c.conv_stride + k)
                                          : DetectorConfig::kPaddingToken;
      g.embedding.row(id) += dwindows.row(r).segment(k * embed, embed);
    }
  }
  return out;
}

TensorContainer DetectorModel::to_container() const {
  TensorContainer c;
  c.kind = "detector";
  c.header = config.to_key_values();
  for_each_tensor(params, [&](const std::string& name, const auto& t) {
    NamedTensor nt;
    nt.name = name;
    nt.shape = {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())};
    nt.values.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) nt.values.push_back(static_cast<float>(t.data()[i]));
    c.tensors.push_back(std::move(nt));
  });
  return c;
}

DetectorModel DetectorModel::from_container(const TensorContainer& c) {
  if (c.kind != "detector")
    throw Error(ErrorCode::CorruptCheckpoint, "expected a detector checkpoint, found '" + c.kind + "'");
  DetectorModel m;
  m.config = DetectorConfig::from_key_values(c.header);
  m.params = DetectorParams::zeros(m.config);
  std::size_t index = 0;
  for_each_tensor(m.params, [&](const std::string& name, auto& t) {
    if (index >= c.tensors.size()) throw Error(ErrorCode::CorruptCheckpoint, "missing tensor '" + name + "'");
    const NamedTensor& nt = c.tensors[index++];
    if (nt.name != name || nt.shape.size() != 2 ||
        nt.shape[0] != static_cast<std::uint64_t>(t.rows()) ||
        nt.shape[1] != static_cast<std::uint64_t>(t.cols()) ||
        nt.values.size() != static_cast<std::size_t>(t.size()))
      throw Error(ErrorCode::CorruptCheckpoint, "tensor '" + nt.name + "' does not match '" + name + "'");
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = nt.values[static_cast<std::size_t>(i)];
  });
  if (index != c.tensors.size()) throw Error(ErrorCode::CorruptCheckpoint, "unexpected extra tensors");
  return m;
}

}  // namespace byteshot::detector
