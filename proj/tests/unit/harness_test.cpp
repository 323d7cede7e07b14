#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "byteshot/error.hpp"
#include "byteshot/harness/experiment.hpp"
#include "byteshot/harness/manifest.hpp"
#include "byteshot/harness/report.hpp"
#include "byteshot/harness/stats.hpp"
#include "byteshot/harness/synthetic.hpp"
#include "fixtures.hpp"

namespace byteshot::harness {
namespace {

using attacks::AttackOutcome;
using attacks::Strategy;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoFailure;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("byteshot_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

TEST(Manifest, JsonRoundTrip) {
  CorpusManifest m;
  m.entries.push_back({"benign/a.bin", "a", SampleLabel::Benign, std::nullopt});
  m.entries.push_back({"malicious/b.bin", "b", SampleLabel::Malicious, CategoryLabel::Rootkit});
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
}

TEST(Manifest, RejectsInvalidDocuments) {
  EXPECT_EQ(code_of([] { manifest_from_json(R"({"entries": []})"); }), ErrorCode::InvalidManifest);
  EXPECT_EQ(code_of([] { manifest_from_json(R"({"format_version": 1, "entries": []})"); }), ErrorCode::EmptyManifest);
  EXPECT_EQ(code_of([] { manifest_from_json("not json"); }), ErrorCode::InvalidManifest);
  EXPECT_EQ(code_of([] {
              manifest_from_json(R"({"format_version": 1, "entries": [
                {"path": "x", "sample_id": "a", "label": "benign"},
                {"path": "y", "sample_id": "a", "label": "benign"}]})");
            }),
            ErrorCode::InvalidManifest);
  EXPECT_EQ(code_of([] {
              manifest_from_json(R"({"format_version": 1, "entries": [
                {"path": "x", "sample_id": "a", "label": "malicious"}]})");
            }),
            ErrorCode::InvalidManifest);
  EXPECT_EQ(code_of([] {
              manifest_from_json(R"({"format_version": 1, "entries": [
                {"path": "x", "sample_id": "a", "label": "malicious", "category": "worm"}]})");
            }),
            ErrorCode::InvalidManifest);
  EXPECT_EQ(code_of([] {
              manifest_from_json(R"({"format_version": 2, "entries": [
                {"path": "x", "sample_id": "a", "label": "benign"}]})");
            }),
            ErrorCode::InvalidManifest);
  EXPECT_EQ(code_of([] { load_manifest("/nonexistent/manifest.json"); }), ErrorCode::IoFailure);
}

TEST(Category, EightLabelsRoundTrip) {
  EXPECT_EQ(kAllCategories.size(), 8u);
  for (auto c : kAllCategories) EXPECT_EQ(parse_category(to_string(c)), c);
  EXPECT_EQ(to_string(CategoryLabel::Ransomware), "ransomware");
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  const auto spec = SyntheticCorpusSpec::desk(6, 2, 11);
  const auto a = synthesize_corpus(spec);
  const auto b = synthesize_corpus(spec);
  EXPECT_EQ(a.files, b.files);
  EXPECT_EQ(a.manifest, b.manifest);
  auto other = spec;
  other.seed = 12;
  EXPECT_NE(synthesize_corpus(other).files, a.files);
}

TEST(Synthetic, LayoutSizesAndDivergence) {
  auto spec = SyntheticCorpusSpec::desk(20, 6, 4);
  spec.num_malicious_per_category[CategoryLabel::Botnet] = 0;
  const auto corpus = synthesize_corpus(spec);
  EXPECT_GE(corpus.divergence, spec.min_divergence);
  std::set<CategoryLabel> present;
  std::map<CategoryLabel, double> mean_len;
  std::vector<Bytes> benign, malicious;
  for (std::size_t i = 0; i < corpus.files.size(); ++i) {
    const auto& e = corpus.manifest.entries[i];
    const auto& f = corpus.files[i];
    ASSERT_GE(f.size(), 2u);
    EXPECT_EQ(f[0], 'M');
    EXPECT_EQ(f[1], 'Z');
    if (e.label == SampleLabel::Benign) {
      EXPECT_GE(f.size(), spec.benign_length.min_bytes);
      EXPECT_LE(f.size(), spec.benign_length.max_bytes);
      benign.push_back(f);
      continue;
    }
    malicious.push_back(f);
    present.insert(*e.category);
    const auto r = spec.length_range_bytes.at(*e.category);
    EXPECT_GE(f.size(), r.min_bytes);
    EXPECT_LE(f.size(), r.max_bytes);
    mean_len[*e.category] += static_cast<double>(f.size()) / 6.0;
  }
  EXPECT_EQ(present.count(CategoryLabel::Botnet), 0u);
  EXPECT_EQ(present.size(), 7u);
  EXPECT_LT(mean_len[CategoryLabel::Dropper], mean_len[CategoryLabel::Ransomware]);
  EXPECT_LT(mean_len[CategoryLabel::Virus], mean_len[CategoryLabel::Backdoor]);
  // Independent recomputation of the divergence.
  const auto p = mean_byte_histogram(benign), q = mean_byte_histogram(malicious);
  double js = 0;
  for (int i = 0; i < 256; ++i) {
    const double m = (p[i] + q[i]) / 2;
    if (p[i] > 0) js += p[i] / 2 * std::log2(p[i] / m);
    if (q[i] > 0) js += q[i] / 2 * std::log2(q[i] / m);
  }
  EXPECT_NEAR(js, corpus.divergence, 1e-12);
}

TEST(Synthetic, DivergenceFloorEnforced) {
  auto spec = SyntheticCorpusSpec::desk(4, 1, 1);
  spec.malicious_profile = spec.benign_profile;
  spec.malicious_profile.motifs_per_file = 0;
  EXPECT_EQ(code_of([&] { synthesize_corpus(spec); }), ErrorCode::InvalidConfig);
}

TEST(JsDivergence, KnownValues) {
  const std::vector<double> a = {1, 0}, b = {0, 1}, c = {0.5, 0.5};
  EXPECT_NEAR(js_divergence(a, b), 1.0, 1e-12);
  EXPECT_NEAR(js_divergence(a, a), 0.0, 1e-12);
  EXPECT_NEAR(js_divergence(c, c), 0.0, 1e-12);
}

TEST(Synthetic, WritesFilesAndManifest) {
  const auto dir = scratch("corpus");
  const auto corpus = generate_synthetic_corpus(SyntheticCorpusSpec::desk(3, 1, 5), dir);
  const auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m, corpus.manifest);
  const auto all = load_samples(m, dir);
  ASSERT_EQ(all.size(), corpus.files.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].bytes, corpus.files[i]);
  EXPECT_EQ(load_samples(m, dir, SampleLabel::Benign).size(), 3u);
  const auto mal = load_samples(m, dir, SampleLabel::Malicious);
  EXPECT_EQ(mal.size(), 8u);
  EXPECT_EQ(mal[0].format, SampleFormat::PeLike);
  EXPECT_TRUE(mal[0].category.has_value());
  std::filesystem::remove_all(dir);
}

TEST(Synthetic, UnwritableDirectory) {
  EXPECT_EQ(code_of([] { generate_synthetic_corpus(SyntheticCorpusSpec::desk(1, 1, 1), "/proc/byteshot/x"); }),
            ErrorCode::IoFailure);
}

AttackOutcome outcome(bool evaded, bool functional, CategoryLabel c = CategoryLabel::Adware, std::string id = "s") {
  AttackOutcome o;
  o.sample_id = std::move(id);
  o.category = c;
  o.evaded = evaded;
  o.functional = functional;
  o.queries_used = 1;
  return o;
}

TEST(EvasionRate, Examples) {
  EXPECT_EQ(evasion_rate(std::vector<AttackOutcome>{}, 10), 0.0);
  std::vector<AttackOutcome> outs;
  for (int i = 0; i < 3; ++i) outs.push_back(outcome(true, true));
  for (int i = 0; i < 2; ++i) outs.push_back(outcome(true, false));
  for (int i = 0; i < 2; ++i) outs.push_back(outcome(false, true));
  EXPECT_DOUBLE_EQ(evasion_rate(outs, 10), 0.3);
  const std::vector<AttackOutcome> all(4, outcome(true, true));
  EXPECT_EQ(evasion_rate(all, 4), 1.0);
  EXPECT_EQ(code_of([] { evasion_rate(std::vector<AttackOutcome>{}, 0); }), ErrorCode::ZeroDenominator);
  EXPECT_EQ(code_of([&] { evasion_rate(all, 3); }), ErrorCode::DegenerateInput);
}

TEST(EvasionRate, RandomizedBruteForceRecount) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<AttackOutcome> outs;
    for (std::size_t i = 0; i < n; ++i) outs.push_back(outcome(rng() % 2, rng() % 3 != 0));
    std::size_t both = 0;
    for (const auto& o : outs) both += (o.evaded && o.functional) ? 1 : 0;
    EXPECT_EQ(evasion_rate(outs, n), static_cast<double>(both) / static_cast<double>(n));
  }
}

TEST(PairedTTest, FrozenEightPairExample) {
  // Per-category rates; t and p from an independent textbook computation.
  const std::vector<double> a = {0.2589, 0.1886, 0.2586, 0.2743, 0.2033, 0.2453, 0.2297, 0.2838};
  const std::vector<double> b = {0.1551, 0.2198, 0.2186, 0.1648, 0.1444, 0.0377, 0.1125, 0.1229};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.statistic, 3.676593885457552, 1e-6);
  EXPECT_NEAR(r.p_value, 0.007895127347712905, 1e-4);
  EXPECT_EQ(r.pairs, 8);
}

TEST(PairedTTest, SymmetricAndDegenerateCases) {
  const auto r = paired_t_test(std::vector<double>{1, 0}, std::vector<double>{0, 1});
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  const std::vector<double> same = {0.1, 0.2, 0.3};
  EXPECT_EQ(code_of([&] { paired_t_test(same, same); }), ErrorCode::DegenerateInput);
  EXPECT_EQ(code_of([] { paired_t_test(std::vector<double>{1}, std::vector<double>{0}); }),
            ErrorCode::DegenerateInput);
  EXPECT_EQ(code_of([] { paired_t_test(std::vector<double>{1, 2}, std::vector<double>{0}); }),
            ErrorCode::DegenerateInput);
  // Constant nonzero shift also has zero variance.
  EXPECT_EQ(code_of([] { paired_t_test(std::vector<double>{1, 2}, std::vector<double>{0, 1}); }),
            ErrorCode::DegenerateInput);
}

RunMetadata two_columns() {
  RunMetadata m;
  m.columns = {{"random_append", Strategy::RandomAppend, ThreatModel::single_shot()},
               {"lm_guided", Strategy::LmGuided, ThreatModel::single_shot()}};
  m.fingerprints = {{"detector", "00ff"}};
  m.seeds = {{"experiment", 3}};
  m.malicious_total = 10;
  return m;
}

std::vector<OutcomeRow> random_rows(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<OutcomeRow> rows;
  for (const char* col : {"random_append", "lm_guided"}) {
    for (int i = 0; i < 40; ++i) {
      auto o = outcome(rng() % 2, rng() % 4 != 0, kAllCategories[rng() % 7], "id" + std::to_string(i));
      o.strategy = std::string(col) == "lm_guided" ? Strategy::LmGuided : Strategy::RandomAppend;
      o.payload_bytes = rng() % 10241;
      if (rng() % 9 == 0) o.aborted = ErrorCode::PayloadTooLarge;
      rows.push_back({col, o});
    }
  }
  return rows;
}

TEST(Report, CellsRecountFromRows) {
  const auto rows = random_rows(1);
  const auto report = build_report(two_columns(), rows);
  ASSERT_EQ(report.columns.size(), 2u);
  for (const auto& col : report.columns) {
    std::size_t total_n = 0;
    for (auto c : kAllCategories) {
      std::size_t n = 0, both = 0;
      for (const auto& r : rows)
        if (r.column == col.spec.label && r.outcome.category == c) {
          ++n;
          both += r.outcome.evaded && r.outcome.functional;
        }
      const auto& cell = col.cells.at(c);
      EXPECT_EQ(cell.n, n);
      EXPECT_EQ(cell.evaded_and_functional, both);
      if (n == 0) {
        EXPECT_FALSE(cell.rate);
      } else {
        EXPECT_EQ(*cell.rate, static_cast<double>(both) / static_cast<double>(n));
        EXPECT_GE(*cell.rate, 0.0);
        EXPECT_LE(*cell.rate, 1.0);
      }
      total_n += cell.n;
    }
    EXPECT_EQ(col.total.n, total_n);
    EXPECT_EQ(col.queries.attacks, 40u);
  }
}

TEST(Report, OrderIndependent) {
  auto rows = random_rows(2);
  const auto a = report_to_json(build_report(two_columns(), rows));
  std::shuffle(rows.begin(), rows.end(), std::mt19937_64(5));
  EXPECT_EQ(report_to_json(build_report(two_columns(), rows)), a);
}

TEST(Report, CsvLayout) {
  const auto csv = report_to_csv(build_report(two_columns(), random_rows(3)));
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 1u + 2 * 9);
  EXPECT_EQ(lines[0], "strategy,category,n,evaded,functional,evaded_and_functional,rate");
  EXPECT_EQ(lines[9].rfind("random_append,total,", 0), 0u);
  EXPECT_EQ(lines[18].rfind("lm_guided,total,", 0), 0u);
  // Virus is never drawn by random_rows, so its cell has N = 0.
  EXPECT_NE(csv.find("random_append,virus,0,0,0,0,NA"), std::string::npos);
}

TEST(Report, JsonIsCanonicalAndCarriesFingerprints) {
  const auto text = report_to_json(build_report(two_columns(), random_rows(4)));
  const auto doc = nlohmann::json::parse(text);
  EXPECT_EQ(doc.dump(2) + "\n", text);
  EXPECT_EQ(doc["run"]["fingerprints"]["detector"], "00ff");
  EXPECT_EQ(doc["run"]["threat_model"]["max_append_bytes"], 10240);
  EXPECT_EQ(doc["columns"][0]["cells"].size(), 8u);
  ASSERT_EQ(doc["significance"].size(), 1u);
  EXPECT_EQ(doc["significance"][0]["a"], "lm_guided");
}

TEST(Report, OutcomesAndMetadataRoundTrip) {
  const auto rows = random_rows(5);
  EXPECT_EQ(outcomes_from_csv(outcomes_to_csv(rows)), rows);
  const auto meta = two_columns();
  const auto back = metadata_from_json(metadata_to_json(meta));
  EXPECT_EQ(metadata_to_json(back), metadata_to_json(meta));
  EXPECT_EQ(code_of([] { outcomes_from_csv("bad header\n"); }), ErrorCode::InvalidConfig);
}

TEST(Report, UndeclaredColumnRejected) {
  std::vector<OutcomeRow> rows = {{"mystery", outcome(true, true)}};
  EXPECT_EQ(code_of([&] { build_report(two_columns(), rows); }), ErrorCode::InvalidConfig);
}

/// Flags a sample as malicious unless its id ends in '!'; score feedback
/// reports 0.9.
class IdDetector final : public detector::ScoringModel {
 public:
  double score(std::span<const std::uint8_t> bytes) const override {
    return bytes.size() > 40 && bytes[40] == '!' ? 0.1 : 0.9;
  }
  double threshold() const override { return 0.5; }
};

BinarySample sample(const std::string& id, CategoryLabel c, bool flagged = true) {
  Bytes b(64, 1);
  b[0] = 'M';
  b[1] = 'Z';
  b[40] = flagged ? 0 : '!';
  auto s = parse_sample(b, id);
  s.category = c;
  return s;
}

TEST(Experiment, SingleCellMinimalRun) {
  const IdDetector det;
  ExperimentModels models;
  models.detector = &det;
  ExperimentConfig cfg;
  cfg.columns = {{"random_append", Strategy::RandomAppend, ThreatModel::single_shot()}};
  const auto r = run_experiment(cfg, {sample("only", CategoryLabel::Virus)}, {}, models);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.report.columns[0].cells.at(CategoryLabel::Virus).n, 1u);
  EXPECT_EQ(r.report.columns[0].total.n, 1u);
  EXPECT_EQ(r.report.columns[0].cells.at(CategoryLabel::Adware).n, 0u);
}

TEST(Experiment, ExcludesInitiallyBenignAndRecordsIncompatibility) {
  const IdDetector det;
  const auto lm_cfg = testing::tiny_lm_config(bytelm::LMConfig::kFullVocab);
  const bytelm::LanguageModel lm{lm_cfg, testing::random_lm_params<float>(lm_cfg, 1, 0.2)};
  ExperimentModels models;
  models.detector = &det;
  models.lm = &lm;
  models.rnn_lm = &lm;
  ExperimentConfig cfg;
  cfg.columns = standard_columns(ThreatModel::single_shot(), 4);
  cfg.lm_payload_bytes = 64;
  cfg.enhanced = {32, 2};
  std::vector<BinarySample> mal = {sample("a", CategoryLabel::Adware), sample("b", CategoryLabel::Adware, false),
                                   sample("c", CategoryLabel::Spyware), sample("d", CategoryLabel::Rootkit, false)};
  const std::vector<BinarySample> ben = {sample("x", CategoryLabel::Adware)};
  const auto r = run_experiment(cfg, mal, ben, models);
  EXPECT_EQ(r.meta.excluded_initially_benign, 2u);
  EXPECT_EQ(r.meta.malicious_total, 4u);
  ASSERT_EQ(r.report.columns.size(), 6u);
  for (const auto& row : r.rows) {
    EXPECT_NE(row.outcome.sample_id, "b");
    EXPECT_NE(row.outcome.sample_id, "d");
  }
  for (const auto& col : r.report.columns) EXPECT_EQ(col.total.n, 2u);
  const auto& single_enh = r.report.columns[2];
  EXPECT_EQ(single_enh.spec.strategy, Strategy::EnhancedBenignAppend);
  EXPECT_EQ(single_enh.queries.aborted, 2u);
  EXPECT_EQ(*single_enh.total.rate, 0.0);
  const auto& multi_enh = r.report.columns[5];
  EXPECT_EQ(multi_enh.spec.label, "enhanced_benign_append@q4");
  EXPECT_LE(multi_enh.queries.max_queries, 4);
  EXPECT_EQ(multi_enh.queries.aborted, 0u);
}

TEST(Experiment, DeterministicAndThreadInvariant) {
  const IdDetector det;
  const auto lm_cfg = testing::tiny_lm_config(bytelm::LMConfig::kFullVocab);
  const bytelm::LanguageModel lm{lm_cfg, testing::random_lm_params<float>(lm_cfg, 2, 0.2)};
  ExperimentModels models;
  models.detector = &det;
  models.lm = &lm;
  ExperimentConfig cfg;
  cfg.columns = {{"random_append", Strategy::RandomAppend, ThreatModel::single_shot()},
                 {"lm_guided", Strategy::LmGuided, ThreatModel::single_shot()}};
  cfg.lm_payload_bytes = 40;
  std::vector<BinarySample> mal;
  for (int i = 0; i < 11; ++i) mal.push_back(sample("m" + std::to_string(i), kAllCategories[i % 8]));
  const auto a = run_experiment(cfg, mal, {}, models);
  const auto b = run_experiment(cfg, mal, {}, models);
  EXPECT_EQ(report_to_json(a.report), report_to_json(b.report));
  cfg.threads = 3;
  const auto c = run_experiment(cfg, mal, {}, models);
  EXPECT_EQ(c.rows, a.rows);
  EXPECT_EQ(report_to_json(c.report), report_to_json(a.report));
}

TEST(Experiment, MissingInputs) {
  const IdDetector det;
  ExperimentModels models;
  models.detector = &det;
  ExperimentConfig cfg;
  cfg.columns = {{"lm_guided", Strategy::LmGuided, ThreatModel::single_shot()}};
  EXPECT_EQ(code_of([&] { run_experiment(cfg, {sample("a", CategoryLabel::Virus)}, {}, models); }),
            ErrorCode::MissingCheckpoint);
  EXPECT_EQ(code_of([&] { run_experiment(cfg, {}, {}, models); }), ErrorCode::EmptyManifest);
  CorpusManifest m;
  m.entries.push_back({"x.bin", "x", SampleLabel::Malicious, CategoryLabel::Virus});
  EXPECT_EQ(code_of([&] { run_experiment(cfg, m, "/nonexistent", CheckpointPaths{"/nonexistent/d.bin", "/nonexistent/l.bin", {}}); }),
            ErrorCode::MissingCheckpoint);
}

}  // namespace
}  // namespace byteshot::harness
