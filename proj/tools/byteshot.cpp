// byteshot: corpus generation, model training, attacks and reporting.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "byteshot/bytelm/train.hpp"
#include "byteshot/checkpoint.hpp"
#include "byteshot/detector/train.hpp"
#include "byteshot/error.hpp"
#include "byteshot/harness/experiment.hpp"
#include "byteshot/harness/manifest.hpp"
#include "byteshot/harness/report.hpp"
#include "byteshot/harness/synthetic.hpp"

namespace fs = std::filesystem;
using namespace byteshot;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "cannot create output directory " + dir.string());
}

struct GenCorpusArgs {
  std::string out;
  std::size_t num_benign = 64;
  std::size_t per_category = 24;
  double min_divergence = 0.1;
  std::uint64_t seed = 0;
};

struct TrainLmArgs {
  std::string manifest, out;
  std::string preset = "desk";
  std::optional<int> blocks, embed_dim, heads, context_len, ffn_dim, iterations;
  std::optional<double> learning_rate;
  std::uint64_t seed = 0;
};

struct TrainDetectorArgs {
  std::string manifest, out;
  detector::DetectorConfig config;
  std::optional<double> calibrate_fpr;
};

struct AttackArgs {
  std::string manifest, detector, lm, rnn_lm, out;
  std::string strategies;
  int enhanced_queries = 16;
  int max_queries = 1;
  std::size_t max_append_bytes = ThreatModel::kDefaultMaxAppendBytes;
  std::string feedback = "boolean_only";
  double temperature = 1.0;
  int top_k = 40;
  bool greedy = false;
  std::size_t payload_bytes = ThreatModel::kDefaultMaxAppendBytes;
  std::size_t chunk_bytes = 1024;
  int candidates = 8;
  std::uint64_t seed = 0;
};

struct ReportArgs {
  std::string run, out;
};

int cmd_gen_corpus(const GenCorpusArgs& a) {
  auto spec = harness::SyntheticCorpusSpec::desk(a.num_benign, a.per_category, a.seed);
  spec.min_divergence = a.min_divergence;
  const auto corpus = harness::generate_synthetic_corpus(spec, a.out);
  std::cerr << "wrote " << corpus.files.size() << " files to " << a.out << " (class divergence "
            << corpus.divergence << " bits)\n";
  return 0;
}

std::vector<std::vector<std::uint8_t>> load_bytes(const harness::CorpusManifest& m, const fs::path& root,
                                                  harness::SampleLabel label) {
  std::vector<std::vector<std::uint8_t>> out;
  for (auto& s : harness::load_samples(m, root, label)) out.push_back(std::move(s.bytes));
  return out;
}

int cmd_train_lm(const TrainLmArgs& a) {
  const auto manifest = harness::load_manifest(a.manifest);
  auto c = bytelm::LMConfig::preset(a.preset);
  if (a.blocks) c.num_blocks = *a.blocks;
  if (a.embed_dim) c.embed_dim = *a.embed_dim;
  if (a.heads) c.num_heads = *a.heads;
  if (a.context_len) c.context_len = *a.context_len;
  if (a.ffn_dim) c.ffn_dim = *a.ffn_dim;
  if (a.iterations) c.train_iterations = *a.iterations;
  if (a.learning_rate) c.learning_rate = *a.learning_rate;
  c.seed = a.seed;
  c.validate();

  const auto corpus = load_bytes(manifest, fs::path(a.manifest).parent_path(), harness::SampleLabel::Benign);
  prepare_out_dir(a.out);
  const auto result = bytelm::lm_train(corpus, c, [&](int it, double loss) {
    if ((it + 1) % 100 == 0 || it + 1 == c.train_iterations)
      std::cerr << "iteration " << it + 1 << "/" << c.train_iterations << " loss " << loss << "\n";
  });
  result.model.save(fs::path(a.out) / "lm.bin");
  std::ostringstream csv;
  csv << "iteration,loss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
    csv << i << ',' << harness::format_real(result.loss_trace[i]) << '\n';
  write_text(fs::path(a.out) / "loss.csv", csv.str());
  return 0;
}

int cmd_train_detector(const TrainDetectorArgs& a) {
  const auto manifest = harness::load_manifest(a.manifest);
  auto c = a.config;
  c.calibrate_fpr = a.calibrate_fpr;
  c.validate();
  const fs::path root = fs::path(a.manifest).parent_path();
  const auto benign = load_bytes(manifest, root, harness::SampleLabel::Benign);
  const auto malicious = load_bytes(manifest, root, harness::SampleLabel::Malicious);
  prepare_out_dir(a.out);
  const auto r = detector::detector_train(benign, malicious, c);
  r.model.save(fs::path(a.out) / "detector.bin");
  const auto& m = r.metrics;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  const nlohmann::json doc = {{"train_count", m.train_count},
                              {"validation_count", m.validation_count},
                              {"train_accuracy", m.train_accuracy},
                              {"train_auc", finite_or_null(m.train_auc)},
                              {"validation_accuracy", finite_or_null(m.validation_accuracy)},
                              {"validation_auc", finite_or_null(m.validation_auc)},
                              {"threshold", m.threshold},
                              {"epoch_loss", m.epoch_loss}};
  write_text(fs::path(a.out) / "metrics.json", doc.dump(2) + "\n");
  std::cerr << "validation AUC " << m.validation_auc << ", accuracy " << m.validation_accuracy << "\n";
  return 0;
}

harness::ExperimentResult run_attacks(const AttackArgs& a, unsigned threads) {
  ThreatModel tm;
  tm.max_queries = a.max_queries;
  tm.max_append_bytes = a.max_append_bytes;
  if (a.feedback == "score_feedback") tm.feedback = FeedbackMode::ScoreFeedback;
  else if (a.feedback != "boolean_only") throw Error(ErrorCode::InvalidConfig, "unknown feedback mode " + a.feedback);
  tm.validate();

  std::vector<std::string> names;
  for (std::size_t pos = 0; pos < a.strategies.size();) {
    const auto end = std::min(a.strategies.find(',', pos), a.strategies.size());
    if (end > pos) names.push_back(a.strategies.substr(pos, end - pos));
    pos = end + 1;
  }
  if (names.empty()) {
    for (auto s : attacks::kAllStrategies)
      if (s != attacks::Strategy::RnnStyleLm || !a.rnn_lm.empty()) names.emplace_back(attacks::to_string(s));
  }
  harness::ExperimentConfig cfg;
  for (const auto& n : names) {
    const auto s = attacks::parse_strategy(n);
    if (!s) throw Error(ErrorCode::InvalidConfig, "unknown strategy " + n);
    cfg.columns.push_back({n, *s, tm});
  }
  if (a.enhanced_queries >= 2) {
    const auto extra = harness::standard_columns(tm, a.enhanced_queries);
    cfg.columns.push_back(extra.back());
  }
  cfg.sampler.temperature = a.temperature;
  cfg.sampler.top_k = a.top_k;
  cfg.sampler.greedy = a.greedy;
  cfg.lm_payload_bytes = a.payload_bytes;
  cfg.enhanced = {a.chunk_bytes, a.candidates};
  cfg.seed = a.seed;
  cfg.threads = threads;

  harness::CheckpointPaths paths{a.detector, a.lm, std::nullopt};
  if (!a.rnn_lm.empty()) paths.rnn_lm = a.rnn_lm;
  const auto manifest = harness::load_manifest(a.manifest);
  return harness::run_experiment(cfg, manifest, fs::path(a.manifest).parent_path(), paths);
}

void write_report(const harness::EvasionReport& report, const fs::path& dir) {
  write_text(dir / "report.json", harness::report_to_json(report));
  write_text(dir / "report.csv", harness::report_to_csv(report));
  for (const auto& col : report.columns) {
    std::cerr << col.spec.label << ": total "
              << (col.total.rate ? harness::format_real(*col.total.rate) : std::string("NA")) << " (N=" << col.total.n
              << ")\n";
  }
}

int cmd_attack(const AttackArgs& a, unsigned threads, bool with_report) {
  prepare_out_dir(a.out);
  const auto r = run_attacks(a, threads);
  write_text(fs::path(a.out) / "outcomes.csv", harness::outcomes_to_csv(r.rows));
  write_text(fs::path(a.out) / "run.json", harness::metadata_to_json(r.meta));
  if (with_report) write_report(r.report, a.out);
  return 0;
}

int cmd_report(const ReportArgs& a) {
  const fs::path run(a.run);
  const auto meta = harness::metadata_from_json(read_text(run / "run.json"));
  const auto rows = harness::outcomes_from_csv(read_text(run / "outcomes.csv"));
  const fs::path out = a.out.empty() ? run : fs::path(a.out);
  prepare_out_dir(out);
  write_report(harness::build_report(meta, rows), out);
  return 0;
}

void add_attack_options(CLI::App* sub, AttackArgs& a) {
  sub->add_option("--manifest", a.manifest, "Corpus manifest (JSON)")->required();
  sub->add_option("--detector", a.detector, "Detector checkpoint")->required();
  sub->add_option("--lm", a.lm, "Language-model checkpoint");
  sub->add_option("--rnn-lm", a.rnn_lm, "Checkpoint of the weaker single-block generator");
  sub->add_option("--strategies", a.strategies, "Comma-separated strategies (default: all available)");
  sub->add_option("--enhanced-queries", a.enhanced_queries,
                  "Extra enhanced-benign column with this many score-feedback queries (0 disables)")
      ->capture_default_str();
  sub->add_option("--max-queries", a.max_queries)->capture_default_str();
  sub->add_option("--max-append-bytes", a.max_append_bytes)->capture_default_str();
  sub->add_option("--feedback", a.feedback)->check(CLI::IsMember({"boolean_only", "score_feedback"}))->capture_default_str();
  sub->add_option("--temperature", a.temperature)->capture_default_str();
  sub->add_option("--top-k", a.top_k, "0 = unlimited")->capture_default_str();
  sub->add_flag("--greedy", a.greedy, "Argmax decoding");
  sub->add_option("--payload-bytes", a.payload_bytes, "Generated payload length")->capture_default_str();
  sub->add_option("--chunk-bytes", a.chunk_bytes)->capture_default_str();
  sub->add_option("--candidates", a.candidates)->capture_default_str();
  sub->add_option("--seed", a.seed)->capture_default_str();
  sub->add_option("--out", a.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-shot append-attack evaluation harness"};
  app.set_config("--config", "", "Flat key=value file; keys are <subcommand>.<option>");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "Worker threads for attack fan-out")->check(CLI::PositiveNumber);

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic benign/malicious corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--num-benign", gen.num_benign);
  gen_cmd->add_option("--per-category", gen.per_category, "Malicious files per category");
  gen_cmd->add_option("--min-divergence", gen.min_divergence, "Class divergence floor in bits");
  gen_cmd->add_option("--seed", gen.seed);

  TrainLmArgs lm;
  auto* lm_cmd = app.add_subcommand("train-lm", "Train the byte-pair language model on benign files");
  lm_cmd->add_option("--manifest", lm.manifest)->required();
  lm_cmd->add_option("--out", lm.out)->required();
  lm_cmd->add_option("--preset", lm.preset)->check(CLI::IsMember({"desk", "toy", "rnn-style", "full"}));
  lm_cmd->add_option("--blocks", lm.blocks);
  lm_cmd->add_option("--embed-dim", lm.embed_dim);
  lm_cmd->add_option("--heads", lm.heads);
  lm_cmd->add_option("--context-len", lm.context_len);
  lm_cmd->add_option("--ffn-dim", lm.ffn_dim);
  lm_cmd->add_option("--iterations", lm.iterations);
  lm_cmd->add_option("--learning-rate", lm.learning_rate);
  lm_cmd->add_option("--seed", lm.seed);

  TrainDetectorArgs det;
  auto* det_cmd = app.add_subcommand("train-detector", "Train the gated-convolution detector");
  det_cmd->add_option("--manifest", det.manifest)->required();
  det_cmd->add_option("--out", det.out)->required();
  det_cmd->add_option("--max-input-bytes", det.config.max_input_bytes);
  det_cmd->add_option("--embed-dim", det.config.embed_dim);
  det_cmd->add_option("--filters", det.config.conv_filters);
  det_cmd->add_option("--width", det.config.conv_width);
  det_cmd->add_option("--stride", det.config.conv_stride);
  det_cmd->add_option("--hidden", det.config.hidden_dim);
  det_cmd->add_option("--learning-rate", det.config.learning_rate);
  det_cmd->add_option("--epochs", det.config.train_epochs);
  det_cmd->add_option("--batch-size", det.config.batch_size);
  det_cmd->add_option("--validation-fraction", det.config.validation_fraction);
  det_cmd->add_option("--threshold", det.config.threshold);
  det_cmd->add_option("--calibrate-fpr", det.calibrate_fpr, "Recalibrate the threshold to this validation FPR");
  det_cmd->add_option("--seed", det.config.seed);

  AttackArgs atk;
  auto* atk_cmd = app.add_subcommand("attack", "Run attacks and write outcome rows");
  add_attack_options(atk_cmd, atk);
  AttackArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Run attacks and write the evasion report");
  add_attack_options(ev_cmd, ev);

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Rebuild the report from persisted outcome rows");
  rep_cmd->add_option("--run", rep.run, "Directory holding outcomes.csv and run.json")->required();
  rep_cmd->add_option("--out", rep.out, "Output directory (defaults to --run)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    int rc = 0;
    std::string out_dir;
    if (chosen == gen_cmd) {
      rc = cmd_gen_corpus(gen);
      out_dir = gen.out;
    } else if (chosen == lm_cmd) {
      rc = cmd_train_lm(lm);
      out_dir = lm.out;
    } else if (chosen == det_cmd) {
      rc = cmd_train_detector(det);
      out_dir = det.out;
    } else if (chosen == atk_cmd) {
      rc = cmd_attack(atk, threads, false);
      out_dir = atk.out;
    } else if (chosen == ev_cmd) {
      rc = cmd_attack(ev, threads, true);
      out_dir = ev.out;
    } else {
      rc = cmd_report(rep);
      out_dir = rep.out.empty() ? rep.run : rep.out;
    }
    // Snapshot of every resolved option, loadable again with --config.
    std::istringstream all(app.config_to_str(true, false));
    std::string snapshot, line;
    const std::string prefix = chosen->get_name() + ".";
    while (std::getline(all, line))
      if (line.rfind(prefix, 0) == 0 || line.find('.') > line.find('=')) snapshot += line + "\n";
    write_text(fs::path(out_dir) / "resolved_config.txt", snapshot);
    return rc;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
