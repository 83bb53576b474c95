#pragma once

// Scoring and agreement statistics.
//
// distance    = log(min(|predicted - gold|, max_diff) + 1) / log(max_diff + 1)
// performance = 1 - distance, or 0 when no term could be extracted.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "agentsbench/utf8.hpp"
#include "json.hpp"

namespace agentsbench {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultMaxDiff = 300;

inline double nlog_distance(long long predicted, long long gold, long long max_diff) {
  if (max_diff < 1) throw EvaluationError("max_diff must be >= 1");
  if (predicted < 0 || gold < 0) throw EvaluationError("terms must be non-negative");
  long long diff = std::min(std::llabs(predicted - gold), max_diff);
  double d = std::log(static_cast<double>(diff) + 1.0) / std::log(static_cast<double>(max_diff) + 1.0);
  return std::clamp(d, 0.0, 1.0);
}

inline double performance_score(std::optional<long long> predicted, long long gold, long long max_diff) {
  if (max_diff < 1) throw EvaluationError("max_diff must be >= 1");
  if (!predicted) return 0.0;
  return 1.0 - nlog_distance(*predicted, gold, max_diff);
}

struct MetricResult {
  std::string case_id;
  std::optional<int> predicted_months;
  int gold_months = 0;
  double distance = 1.0;
  double performance = 0.0;
};

inline MetricResult score_case(std::string case_id, std::optional<int> predicted, int gold, int max_diff) {
  MetricResult r;
  r.case_id = std::move(case_id);
  r.predicted_months = predicted;
  r.gold_months = gold;
  r.distance = predicted ? nlog_distance(*predicted, gold, max_diff) : 1.0;
  r.performance = 1.0 - r.distance;
  return r;
}

inline nlohmann::json to_json(const MetricResult& r) {
  return {{"case_id", r.case_id},
          {"predicted_months", r.predicted_months ? nlohmann::json(*r.predicted_months) : nlohmann::json(nullptr)},
          {"gold_months", r.gold_months},
          {"distance", r.distance},
          {"performance", r.performance}};
}

// Mean performance as a percentage.
inline double aggregate_performance(const std::vector<MetricResult>& results) {
  if (results.empty()) throw EvaluationError("no results to aggregate");
  double sum = 0;
  for (const auto& r : results) sum += r.performance;
  return 100.0 * sum / static_cast<double>(results.size());
}

inline double cohens_kappa(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw EvaluationError("rating vectors differ in length");
  if (a.empty()) throw EvaluationError("no ratings");
  double n = static_cast<double>(a.size());
  double agree = 0;
  double a_true = 0;
  double b_true = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) agree += 1;
    if (a[i]) a_true += 1;
    if (b[i]) b_true += 1;
  }
  double po = agree / n;
  double pa = a_true / n;
  double pb = b_true / n;
  double pe = pa * pb + (1 - pa) * (1 - pb);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1 - pe);
}

enum class Criterion { kLegality, kLogicality, kMorality };

inline std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::kLegality: return "legality";
    case Criterion::kLogicality: return "logicality";
    case Criterion::kMorality: return "morality";
  }
  return "";
}

inline constexpr Criterion kCriteria[] = {Criterion::kLegality, Criterion::kLogicality, Criterion::kMorality};

struct QualityAnnotation {
  std::string case_id;
  std::string rater_id;
  bool legality = false;
  bool logicality = false;
  bool morality = false;

  bool get(Criterion c) const {
    switch (c) {
      case Criterion::kLegality: return legality;
      case Criterion::kLogicality: return logicality;
      case Criterion::kMorality: return morality;
    }
    return false;
  }
};

namespace detail {

// case -> rater -> annotation; every case must carry every rater exactly once.
struct AnnotationMatrix {
  std::vector<std::string> cases;
  std::vector<std::string> raters;
  std::map<std::string, std::map<std::string, const QualityAnnotation*>> cells;
};

inline AnnotationMatrix build_matrix(const std::vector<QualityAnnotation>& annotations) {
  if (annotations.empty()) throw EvaluationError("no annotations");
  AnnotationMatrix m;
  std::map<std::string, int> rater_seen;
  for (const auto& a : annotations) {
    auto& row = m.cells[a.case_id];
    if (row.count(a.rater_id)) {
      throw EvaluationError("duplicate annotation for case '" + a.case_id + "' by rater '" + a.rater_id + "'");
    }
    row[a.rater_id] = &a;
    rater_seen[a.rater_id] = 1;
  }
  for (const auto& [r, _] : rater_seen) m.raters.push_back(r);
  for (const auto& [c, row] : m.cells) {
    m.cases.push_back(c);
    if (row.size() != m.raters.size()) {
      throw EvaluationError("incomplete annotation matrix: case '" + c + "' has " + std::to_string(row.size()) +
                            " of " + std::to_string(m.raters.size()) + " raters");
    }
  }
  return m;
}

}  // namespace detail

// Mean Cohen's kappa over all rater pairs.
inline double pairwise_mean_kappa(const std::vector<QualityAnnotation>& annotations, Criterion criterion) {
  auto m = detail::build_matrix(annotations);
  if (m.raters.size() < 2) throw EvaluationError("agreement needs at least two raters");
  double sum = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < m.raters.size(); ++i) {
    for (std::size_t j = i + 1; j < m.raters.size(); ++j) {
      std::vector<bool> a;
      std::vector<bool> b;
      for (const auto& c : m.cases) {
        a.push_back(m.cells[c][m.raters[i]]->get(criterion));
        b.push_back(m.cells[c][m.raters[j]]->get(criterion));
      }
      sum += cohens_kappa(a, b);
      ++pairs;
    }
  }
  return sum / pairs;
}

struct QualityRates {
  double legality = 0;
  double logicality = 0;
  double morality = 0;

  double get(Criterion c) const {
    switch (c) {
      case Criterion::kLegality: return legality;
      case Criterion::kLogicality: return logicality;
      case Criterion::kMorality: return morality;
    }
    return 0;
  }
};

// Percentage of cases where a strict majority of raters voted true.
inline QualityRates quality_rates(const std::vector<QualityAnnotation>& annotations) {
  auto m = detail::build_matrix(annotations);
  QualityRates out;
  for (auto criterion : kCriteria) {
    int passed = 0;
    for (const auto& c : m.cases) {
      std::size_t yes = 0;
      for (const auto& r : m.raters) yes += m.cells[c][r]->get(criterion) ? 1 : 0;
      if (2 * yes > m.raters.size()) ++passed;
    }
    double pct = 100.0 * passed / static_cast<double>(m.cases.size());
    switch (criterion) {
      case Criterion::kLegality: out.legality = pct; break;
      case Criterion::kLogicality: out.logicality = pct; break;
      case Criterion::kMorality: out.morality = pct; break;
    }
  }
  return out;
}

// RFC 4180 field splitting for one record line.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

// Columns: case_id, rater_id, legality, logicality, morality (values 0/1).
inline std::vector<QualityAnnotation> parse_annotations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw EvaluationError("annotation file is empty");
  auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[utf8::trim(header[i])] = i;
  for (const char* name : {"case_id", "rater_id", "legality", "logicality", "morality"}) {
    if (!col.count(name)) throw EvaluationError(std::string("annotation file missing column '") + name + "'");
  }
  auto flag = [](const std::string& v, std::size_t line_no) {
    auto t = utf8::trim(v);
    if (t == "1" || t == "true" || t == "True" || t == "TRUE") return true;
    if (t == "0" || t == "false" || t == "False" || t == "FALSE") return false;
    throw EvaluationError("line " + std::to_string(line_no) + ": rating must be 0 or 1, got '" + t + "'");
  };
  std::vector<QualityAnnotation> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (utf8::trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < header.size()) throw EvaluationError("line " + std::to_string(line_no) + ": too few columns");
    QualityAnnotation a;
    a.case_id = utf8::trim(f[col["case_id"]]);
    a.rater_id = utf8::trim(f[col["rater_id"]]);
    a.legality = flag(f[col["legality"]], line_no);
    a.logicality = flag(f[col["logicality"]], line_no);
    a.morality = flag(f[col["morality"]], line_no);
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<QualityAnnotation> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EvaluationError("cannot open annotations '" + path + "'");
  return parse_annotations(in);
}

struct RunSummary {
  std::string method;
  std::string model;
  double mean_performance_pct = 0;
  std::optional<double> legality_pct;
  std::optional<double> logicality_pct;
  std::optional<double> morality_pct;
  int case_count = 0;
  int unparsed_count = 0;
};

inline nlohmann::json to_json(const RunSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"method", s.method},
          {"model", s.model},
          {"mean_performance_pct", s.mean_performance_pct},
          {"legality_pct", opt(s.legality_pct)},
          {"logicality_pct", opt(s.logicality_pct)},
          {"morality_pct", opt(s.morality_pct)},
          {"case_count", s.case_count},
          {"unparsed_count", s.unparsed_count}};
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  RunSummary s;
  s.method = j.at("method").get<std::string>();
  s.model = j.at("model").get<std::string>();
  s.mean_performance_pct = j.at("mean_performance_pct").get<double>();
  s.legality_pct = opt("legality_pct");
  s.logicality_pct = opt("logicality_pct");
  s.morality_pct = opt("morality_pct");
  s.case_count = j.value("case_count", 0);
  s.unparsed_count = j.value("unparsed_count", 0);
  return s;
}

enum class ReportFormat { kTable, kDelimited };

namespace detail {

inline int method_rank(std::string_view m) {
  if (m == "standard") return 0;
  if (m == "cot") return 1;
  if (m == "ls") return 2;
  if (m == "bench") return 3;
  return 4;
}

inline std::string method_label(std::string_view m) {
  if (m == "standard") return "Standard Prompt";
  if (m == "cot") return "CoT";
  if (m == "ls") return "LS";
  if (m == "bench") return "AgentsBench";
  return std::string(m);
}

inline std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace detail

// One row per (model, method): rows ordered by model, then method in
// standard / cot / ls / bench order.
inline std::string render_report(std::vector<RunSummary> summaries, ReportFormat format) {
  if (summaries.empty()) throw EvaluationError("nothing to report");
  std::stable_sort(summaries.begin(), summaries.end(), [](const RunSummary& a, const RunSummary& b) {
    if (a.model != b.model) return a.model < b.model;
    int ra = detail::method_rank(a.method);
    int rb = detail::method_rank(b.method);
    if (ra != rb) return ra < rb;
    return a.method < b.method;
  });
  auto opt = [](const std::optional<double>& v) { return v ? detail::fixed2(*v) : std::string(); };
  std::vector<std::vector<std::string>> rows = {
      {"Model", "Method", "Performance (%)", "Legality (%)", "Logicality (%)", "Morality (%)", "Cases", "Unparsed"}};
  for (const auto& s : summaries) {
    rows.push_back({s.model, detail::method_label(s.method), detail::fixed2(s.mean_performance_pct),
                    opt(s.legality_pct), opt(s.logicality_pct), opt(s.morality_pct), std::to_string(s.case_count),
                    std::to_string(s.unparsed_count)});
  }

  std::string out;
  if (format == ReportFormat::kDelimited) {
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += csv_field(row[i]);
      }
      out += '\n';
    }
    return out;
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], utf8::length(row[i]));
  }
  auto line = [&](const std::vector<std::string>& row) {
    std::string l;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) l += " | ";
      l += row[i];
      if (i + 1 < row.size()) l.append(width[i] - utf8::length(row[i]), ' ');
    }
    return utf8::trim(l) + "\n";
  };
  out += line(rows[0]);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 3 * (width.size() - 1), '-') + "\n";
  for (std::size_t r = 1; r < rows.size(); ++r) out += line(rows[r]);
  return out;
}

}  // namespace agentsbench
