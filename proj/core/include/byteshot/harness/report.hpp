#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "byteshot/attacks.hpp"
#include "byteshot/category.hpp"
#include "byteshot/harness/stats.hpp"
#include "byteshot/threat_model.hpp"

namespace byteshot::harness {

/// |{o : o.evaded and o.functional}| / n. Throws ZeroDenominator when n is 0
/// and DegenerateInput when there are more outcomes than n.
double evasion_rate(std::span<const attacks::AttackOutcome> outcomes, std::size_t n);

/// One report column: a strategy run under a particular threat model.
struct ColumnSpec {
  std::string label;
  attacks::Strategy strategy = attacks::Strategy::RandomAppend;
  ThreatModel threat_model;

  bool operator==(const ColumnSpec&) const = default;
};

struct OutcomeRow {
  std::string column;
  attacks::AttackOutcome outcome;

  bool operator==(const OutcomeRow&) const = default;
};

struct CellCounts {
  std::size_t n = 0;
  std::size_t evaded = 0;
  std::size_t functional = 0;
  std::size_t evaded_and_functional = 0;
  /// Empty when n is 0.
  std::optional<double> rate;
};

struct QueryStats {
  std::size_t attacks = 0;
  std::size_t total_queries = 0;
  int max_queries = 0;
  std::size_t aborted = 0;
};

/// Everything about a run that is not an outcome row.
struct RunMetadata {
  ThreatModel threat_model;
  std::vector<ColumnSpec> columns;
  std::map<std::string, std::string> fingerprints;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> settings;
  std::size_t malicious_total = 0;
  std::size_t excluded_initially_benign = 0;
};

struct ColumnReport {
  ColumnSpec spec;
  std::map<CategoryLabel, CellCounts> cells;
  CellCounts total;
  QueryStats queries;
};

struct SignificanceEntry {
  std::string column_a;
  std::string column_b;
  std::optional<SignificanceResult> result;
  /// Why no result was produced.
  std::string note;
};

struct EvasionReport {
  static constexpr int kFormatVersion = 1;

  RunMetadata meta;
  std::vector<ColumnReport> columns;
  std::vector<SignificanceEntry> significance;
};

/// Folds outcome rows into per-cell counts. Every category of every column
/// gets a cell; N is the number of rows in the cell. The fold sorts rows by
/// (column, category, sample_id) first, so input order is irrelevant.
/// Rows naming an undeclared column throw InvalidConfig.
EvasionReport build_report(const RunMetadata& meta, std::span<const OutcomeRow> rows);

/// Canonical JSON with sorted keys.
std::string report_to_json(const EvasionReport& report);
/// Header plus nine rows (eight categories and total) per column.
std::string report_to_csv(const EvasionReport& report);

std::string outcomes_to_csv(std::span<const OutcomeRow> rows);
/// Throws InvalidConfig for malformed rows.
std::vector<OutcomeRow> outcomes_from_csv(std::string_view text);

std::string metadata_to_json(const RunMetadata& meta);
RunMetadata metadata_from_json(std::string_view text);

/// Shortest decimal that round-trips the double.
std::string format_real(double v);

}  // namespace byteshot::harness
