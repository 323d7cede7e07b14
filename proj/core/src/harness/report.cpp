#include "byteshot/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "byteshot/error.hpp"

namespace byteshot::harness {

using attacks::AttackOutcome;
using nlohmann::json;

double evasion_rate(std::span<const AttackOutcome> outcomes, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::ZeroDenominator, "evasion rate over zero samples");
  if (outcomes.size() > n)
    throw Error(ErrorCode::DegenerateInput, "more outcomes than attacked samples");
  std::size_t hits = 0;
  for (const auto& o : outcomes)
    if (o.evaded && o.functional) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void tally(CellCounts& c, const AttackOutcome& o) {
  ++c.n;
  c.evaded += o.evaded;
  c.functional += o.functional;
  c.evaded_and_functional += o.evaded && o.functional;
}

std::string_view feedback_name(FeedbackMode f) {
  return f == FeedbackMode::BooleanOnly ? "boolean_only" : "score_feedback";
}

FeedbackMode parse_feedback(const std::string& s) {
  if (s == "boolean_only") return FeedbackMode::BooleanOnly;
  if (s == "score_feedback") return FeedbackMode::ScoreFeedback;
  throw Error(ErrorCode::InvalidConfig, "unknown feedback mode " + s);
}

json threat_json(const ThreatModel& t) {
  return {{"max_queries", t.max_queries}, {"max_append_bytes", t.max_append_bytes},
          {"feedback", feedback_name(t.feedback)}};
}

ThreatModel threat_from_json(const json& j) {
  ThreatModel t;
  t.max_queries = j.at("max_queries").get<int>();
  t.max_append_bytes = j.at("max_append_bytes").get<std::size_t>();
  t.feedback = parse_feedback(j.at("feedback").get<std::string>());
  return t;
}

json cell_json(const CellCounts& c) {
  return {{"n", c.n},
          {"evaded", c.evaded},
          {"functional", c.functional},
          {"evaded_and_functional", c.evaded_and_functional},
          {"rate", c.rate ? json(*c.rate) : json(nullptr)}};
}

json meta_json(const RunMetadata& m) {
  json cols = json::array();
  for (const auto& c : m.columns)
    cols.push_back({{"label", c.label}, {"strategy", attacks::to_string(c.strategy)},
                    {"threat_model", threat_json(c.threat_model)}});
  return {{"threat_model", threat_json(m.threat_model)},
          {"columns", cols},
          {"fingerprints", m.fingerprints},
          {"seeds", m.seeds},
          {"settings", m.settings},
          {"malicious_total", m.malicious_total},
          {"excluded_initially_benign", m.excluded_initially_benign}};
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::InvalidConfig, "bad number '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw Error(ErrorCode::InvalidConfig, "bad flag '" + s + "'");
}

constexpr std::string_view kOutcomeHeader =
    "column,sample_id,category,strategy,evaded,functional,queries_used,payload_bytes,aborted";

}  // namespace

EvasionReport build_report(const RunMetadata& meta, std::span<const OutcomeRow> rows) {
  EvasionReport report;
  report.meta = meta;
  std::map<std::string, std::size_t> index;
  for (const auto& spec : meta.columns) {
    if (!index.emplace(spec.label, report.columns.size()).second)
      throw Error(ErrorCode::InvalidConfig, "duplicate column " + spec.label);
    ColumnReport col;
    col.spec = spec;
    for (auto c : kAllCategories) col.cells[c] = {};
    report.columns.push_back(std::move(col));
  }

  std::vector<const OutcomeRow*> ordered;
  for (const auto& r : rows) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [&](const OutcomeRow* a, const OutcomeRow* b) {
    const auto ia = index.count(a->column) ? index.at(a->column) : SIZE_MAX;
    const auto ib = index.count(b->column) ? index.at(b->column) : SIZE_MAX;
    if (ia != ib) return ia < ib;
    if (a->outcome.category != b->outcome.category) return a->outcome.category < b->outcome.category;
    return a->outcome.sample_id < b->outcome.sample_id;
  });

  std::map<std::pair<std::size_t, CategoryLabel>, std::vector<AttackOutcome>> by_cell;
  for (const OutcomeRow* r : ordered) {
    const auto it = index.find(r->column);
    if (it == index.end()) throw Error(ErrorCode::InvalidConfig, "outcome for undeclared column " + r->column);
    if (!r->outcome.category)
      throw Error(ErrorCode::InvalidConfig, "outcome without category: " + r->outcome.sample_id);
    ColumnReport& col = report.columns[it->second];
    tally(col.cells[*r->outcome.category], r->outcome);
    tally(col.total, r->outcome);
    by_cell[{it->second, *r->outcome.category}].push_back(r->outcome);
    auto& q = col.queries;
    ++q.attacks;
    q.total_queries += static_cast<std::size_t>(r->outcome.queries_used);
    q.max_queries = std::max(q.max_queries, r->outcome.queries_used);
    q.aborted += r->outcome.aborted.has_value();
  }

  for (std::size_t ci = 0; ci < report.columns.size(); ++ci) {
    ColumnReport& col = report.columns[ci];
    std::vector<AttackOutcome> all;
    for (auto& [cat, cell] : col.cells) {
      if (cell.n == 0) continue;
      const auto& outs = by_cell[{ci, cat}];
      cell.rate = evasion_rate(outs, cell.n);
      all.insert(all.end(), outs.begin(), outs.end());
    }
    if (col.total.n > 0) col.total.rate = evasion_rate(all, col.total.n);
  }

  // LM-guided columns against every other column, over categories both cover.
  for (const auto& a : report.columns) {
    if (a.spec.strategy != attacks::Strategy::LmGuided) continue;
    for (const auto& b : report.columns) {
      if (&a == &b) continue;
      SignificanceEntry entry{a.spec.label, b.spec.label, std::nullopt, ""};
      std::vector<double> ra, rb;
      for (auto c : kAllCategories) {
        const auto& ca = a.cells.at(c);
        const auto& cb = b.cells.at(c);
        if (ca.rate && cb.rate) {
          ra.push_back(*ca.rate);
          rb.push_back(*cb.rate);
        }
      }
      try {
        entry.result = paired_t_test(ra, rb);
      } catch (const Error& e) {
        entry.note = std::string(to_string(e.code()));
      }
      report.significance.push_back(std::move(entry));
    }
  }
  return report;
}

std::string report_to_json(const EvasionReport& report) {
  json cols = json::array();
  for (const auto& col : report.columns) {
    json cells = json::object();
    for (const auto& [c, cell] : col.cells) cells[std::string(to_string(c))] = cell_json(cell);
    const double mean_q = col.queries.attacks
                              ? static_cast<double>(col.queries.total_queries) / static_cast<double>(col.queries.attacks)
                              : 0.0;
    cols.push_back({{"label", col.spec.label},
                    {"strategy", attacks::to_string(col.spec.strategy)},
                    {"threat_model", threat_json(col.spec.threat_model)},
                    {"cells", std::move(cells)},
                    {"total", cell_json(col.total)},
                    {"queries", {{"attacks", col.queries.attacks},
                                 {"total", col.queries.total_queries},
                                 {"max", col.queries.max_queries},
                                 {"mean", mean_q},
                                 {"aborted", col.queries.aborted}}}});
  }
  json sig = json::array();
  for (const auto& s : report.significance) {
    json j = {{"a", s.column_a}, {"b", s.column_b}};
    if (s.result) {
      j["statistic"] = s.result->statistic;
      j["p_value"] = s.result->p_value;
      j["pairs"] = s.result->pairs;
    } else {
      j["note"] = s.note;
    }
    sig.push_back(std::move(j));
  }
  json doc = {{"format_version", EvasionReport::kFormatVersion},
              {"run", meta_json(report.meta)},
              {"columns", std::move(cols)},
              {"significance", std::move(sig)},
              {"exclusion_policy", "malicious samples the detector already classifies benign are excluded from N"}};
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvasionReport& report) {
  std::ostringstream os;
  os << "strategy,category,n,evaded,functional,evaded_and_functional,rate\n";
  auto row = [&](const std::string& label, std::string_view cat, const CellCounts& c) {
    os << label << ',' << cat << ',' << c.n << ',' << c.evaded << ',' << c.functional << ','
       << c.evaded_and_functional << ',' << (c.rate ? format_real(*c.rate) : "NA") << '\n';
  };
  for (const auto& col : report.columns) {
    for (const auto& [c, cell] : col.cells) row(col.spec.label, to_string(c), cell);
    row(col.spec.label, "total", col.total);
  }
  return os.str();
}

std::string outcomes_to_csv(std::span<const OutcomeRow> rows) {
  std::ostringstream os;
  os << kOutcomeHeader << '\n';
  for (const auto& r : rows) {
    const auto& o = r.outcome;
    os << r.column << ',' << o.sample_id << ',' << (o.category ? to_string(*o.category) : "") << ','
       << attacks::to_string(o.strategy) << ',' << int(o.evaded) << ',' << int(o.functional) << ','
       << o.queries_used << ',' << o.payload_bytes << ',' << (o.aborted ? to_string(*o.aborted) : "") << '\n';
  }
  return os.str();
}

std::vector<OutcomeRow> outcomes_from_csv(std::string_view text) {
  std::vector<OutcomeRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kOutcomeHeader)
    throw Error(ErrorCode::InvalidConfig, "outcomes file has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw Error(ErrorCode::InvalidConfig, "outcome row needs 9 fields: " + line);
    OutcomeRow r;
    r.column = f[0];
    r.outcome.sample_id = f[1];
    if (!f[2].empty()) {
      r.outcome.category = parse_category(f[2]);
      if (!r.outcome.category) throw Error(ErrorCode::InvalidConfig, "unknown category " + f[2]);
    }
    const auto strategy = attacks::parse_strategy(f[3]);
    if (!strategy) throw Error(ErrorCode::InvalidConfig, "unknown strategy " + f[3]);
    r.outcome.strategy = *strategy;
    r.outcome.evaded = parse_bool(f[4]);
    r.outcome.functional = parse_bool(f[5]);
    r.outcome.queries_used = parse_number<int>(f[6]);
    r.outcome.payload_bytes = parse_number<std::size_t>(f[7]);
    if (!f[8].empty()) {
      const auto code = parse_error_code(f[8]);
      if (!code) throw Error(ErrorCode::InvalidConfig, "unknown error code " + f[8]);
      r.outcome.aborted = code;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string metadata_to_json(const RunMetadata& meta) { return meta_json(meta).dump(2) + "\n"; }

RunMetadata metadata_from_json(std::string_view text) {
  RunMetadata m;
  try {
    const json j = json::parse(text);
    m.threat_model = threat_from_json(j.at("threat_model"));
    for (const auto& c : j.at("columns")) {
      ColumnSpec spec;
      spec.label = c.at("label").get<std::string>();
      const auto s = attacks::parse_strategy(c.at("strategy").get<std::string>());
      if (!s) throw Error(ErrorCode::InvalidConfig, "unknown strategy in metadata");
      spec.strategy = *s;
      spec.threat_model = threat_from_json(c.at("threat_model"));
      m.columns.push_back(std::move(spec));
    }
    m.fingerprints = j.at("fingerprints").get<std::map<std::string, std::string>>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.settings = j.at("settings").get<std::map<std::string, std::string>>();
    m.malicious_total = j.at("malicious_total").get<std::size_t>();
    m.excluded_initially_benign = j.at("excluded_initially_benign").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("run metadata: ") + e.what());
  }
  return m;
}

}  // namespace byteshot::harness
