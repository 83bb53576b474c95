#pragma once

// Benchmark cases: one JSON object per line with fields
//   id, fact, charge, article, gold
// where `gold` is either integer months or a term expression ("五年",
// "1年2个月", "刑期：12个月").

#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "agentsbench/term_parser.hpp"
#include "agentsbench/utf8.hpp"
#include "json.hpp"

namespace agentsbench {

struct Case {
  std::string id;
  std::string fact;
  std::string charge;
  std::string article;
  int gold_term_months = 0;

  bool operator==(const Case&) const = default;
};

struct DatasetConfig {
  std::size_t max_fact_chars = 2000;
  bool reject_missing_fields = true;
  int max_term_months = 300;
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Keeps the leftmost `max_chars` characters (code points).
inline std::string truncate_fact(std::string_view fact, std::size_t max_chars) {
  return utf8::prefix(fact, max_chars);
}

inline int normalize_gold_term(long long raw) {
  if (raw < 0) throw TermError("negative gold term: " + std::to_string(raw));
  if (raw > std::numeric_limits<int>::max()) throw TermError("gold term out of range");
  return static_cast<int>(raw);
}

inline int normalize_gold_term(std::string_view raw) {
  auto t = utf8::trim(raw);
  if (!t.empty() && t.find_first_not_of("0123456789") == std::string::npos) {
    return normalize_gold_term(std::stoll(t));
  }
  if (auto m = extract_prison_term_months(t)) return *m;
  throw TermError("no term in gold answer '" + std::string(raw) + "'");
}

inline int normalize_gold_term(const nlohmann::json& raw) {
  if (raw.is_number_integer()) return normalize_gold_term(raw.get<long long>());
  if (raw.is_number_unsigned()) return normalize_gold_term(static_cast<long long>(raw.get<unsigned long long>()));
  if (raw.is_string()) return normalize_gold_term(std::string_view(raw.get_ref<const std::string&>()));
  throw TermError("gold answer must be an integer or text");
}

namespace detail {

inline std::string required_text(const nlohmann::json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) throw DatasetError(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw DatasetError(line, std::string("field '") + key + "' must be text");
  auto v = it->get<std::string>();
  if (utf8::trim(v).empty()) throw DatasetError(line, std::string("field '") + key + "' is empty");
  return v;
}

inline std::string record_id(const nlohmann::json& rec, std::size_t line) {
  auto it = rec.find("id");
  if (it == rec.end() || it->is_null()) throw DatasetError(line, "missing field 'id'");
  if (it->is_string()) {
    if (it->get_ref<const std::string&>().empty()) throw DatasetError(line, "field 'id' is empty");
    return it->get<std::string>();
  }
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw DatasetError(line, "field 'id' must be text or integer");
}

inline Case finish_case(Case c, const DatasetConfig& config, std::size_t line) {
  c.fact = truncate_fact(c.fact, config.max_fact_chars);
  if (utf8::trim(c.fact).empty()) throw DatasetError(line, "fact is empty after truncation");
  if (c.gold_term_months > config.max_term_months) {
    throw DatasetError(line, "gold term " + std::to_string(c.gold_term_months) + " exceeds max term " +
                                 std::to_string(config.max_term_months));
  }
  return c;
}

}  // namespace detail

inline Case parse_case_record(std::string_view line_text, const DatasetConfig& config, std::size_t line = 0) {
  nlohmann::json rec;
  try {
    rec = nlohmann::json::parse(line_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(line, std::string("malformed record: ") + e.what());
  }
  if (!rec.is_object()) throw DatasetError(line, "record is not an object");
  Case c;
  c.id = detail::record_id(rec, line);
  c.fact = detail::required_text(rec, "fact", line);
  c.charge = detail::required_text(rec, "charge", line);
  c.article = detail::required_text(rec, "article", line);
  auto gold = rec.find("gold");
  if (gold == rec.end() || gold->is_null()) throw DatasetError(line, "missing field 'gold'");
  try {
    c.gold_term_months = normalize_gold_term(*gold);
  } catch (const TermError& e) {
    throw DatasetError(line, e.what());
  }
  return detail::finish_case(std::move(c), config, line);
}

inline nlohmann::json case_to_json(const Case& c) {
  return {{"id", c.id}, {"fact", c.fact}, {"charge", c.charge}, {"article", c.article}, {"gold", c.gold_term_months}};
}

inline std::string serialize_cases(const std::vector<Case>& cases) {
  std::string out;
  for (const auto& c : cases) {
    out += case_to_json(c).dump();
    out += '\n';
  }
  return out;
}

struct LineDiagnostic {
  std::size_t line = 0;
  bool ok = false;
  std::string case_id;
  std::string message;
};

// Per-line diagnostics; never throws on bad records.
inline std::vector<LineDiagnostic> validate_cases(const std::string& path, const DatasetConfig& config) {
  std::ifstream in(path);
  if (!in) throw DatasetError(0, "cannot open dataset '" + path + "'");
  std::vector<LineDiagnostic> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (utf8::trim(text).empty()) continue;
    LineDiagnostic d;
    d.line = line;
    try {
      auto c = parse_case_record(text, config, line);
      d.ok = true;
      d.case_id = c.id;
      d.message = "ok (gold " + std::to_string(c.gold_term_months) + " months)";
    } catch (const DatasetError& e) {
      d.message = e.what();
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<Case> load_cases(const std::string& path, const DatasetConfig& config) {
  std::ifstream in(path);
  if (!in) throw DatasetError(0, "cannot open dataset '" + path + "'");
  std::vector<Case> cases;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (utf8::trim(text).empty()) continue;
    try {
      cases.push_back(parse_case_record(text, config, line));
    } catch (const DatasetError& e) {
      if (config.reject_missing_fields) throw;
      spdlog::warn("skipping record: {}", e.what());
    }
  }
  return cases;
}

// LawBench prison-term records: {"question": fact + 罪名/法条 tail, "answer": gold}.
// The fact keeps the appended charge and article text; charge and article
// are also split out of the tail.
inline Case import_lawbench_record(const nlohmann::json& rec, std::size_t index, const DatasetConfig& config) {
  std::size_t line = index + 1;
  auto question_it = rec.find("question");
  if (question_it == rec.end() || !question_it->is_string()) throw DatasetError(line, "missing field 'question'");
  const auto& question = question_it->get_ref<const std::string&>();

  static constexpr std::string_view kChargeMarkers[] = {"罪名：", "罪名:", "Crime:"};
  static constexpr std::string_view kArticleMarkers[] = {"法条：", "法条:", "Legal Articles:"};
  auto find_last = [&](const auto& markers) -> std::pair<std::size_t, std::size_t> {
    std::size_t best = std::string::npos;
    std::size_t len = 0;
    for (auto m : markers) {
      auto pos = question.rfind(m);
      if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
        best = pos;
        len = m.size();
      }
    }
    return {best, len};
  };
  auto [charge_pos, charge_len] = find_last(kChargeMarkers);
  auto [article_pos, article_len] = find_last(kArticleMarkers);
  if (charge_pos == std::string::npos) throw DatasetError(line, "no charge marker in question");
  if (article_pos == std::string::npos) throw DatasetError(line, "no article marker in question");

  Case c;
  if (auto id = rec.find("id"); id != rec.end() && id->is_string()) {
    c.id = id->get<std::string>();
  } else {
    c.id = "lawbench-" + std::to_string(index);
  }
  c.fact = utf8::trim(question);
  std::size_t charge_begin = charge_pos + charge_len;
  std::size_t charge_end = article_pos > charge_pos ? article_pos : question.size();
  auto nl = question.find('\n', charge_begin);
  if (nl != std::string::npos && nl < charge_end) charge_end = nl;
  c.charge = utf8::trim(question.substr(charge_begin, charge_end - charge_begin));
  std::size_t article_begin = article_pos + article_len;
  std::size_t article_end = charge_pos > article_pos ? charge_pos : question.size();
  c.article = utf8::trim(question.substr(article_begin, article_end - article_begin));
  if (c.charge.empty()) throw DatasetError(line, "empty charge");
  if (c.article.empty()) throw DatasetError(line, "empty article");

  auto answer = rec.find("answer");
  if (answer == rec.end() || answer->is_null()) throw DatasetError(line, "missing field 'answer'");
  try {
    c.gold_term_months = normalize_gold_term(*answer);
  } catch (const TermError& e) {
    throw DatasetError(line, e.what());
  }
  return detail::finish_case(std::move(c), config, line);
}

// Reads either a JSON array or line-delimited LawBench records.
inline std::vector<Case> import_lawbench(const std::string& path, const DatasetConfig& config) {
  std::ifstream in(path);
  if (!in) throw DatasetError(0, "cannot open '" + path + "'");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<nlohmann::json> records;
  auto first = all.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && all[first] == '[') {
    for (auto& r : nlohmann::json::parse(all)) records.push_back(std::move(r));
  } else {
    std::size_t start = 0;
    std::size_t line = 0;
    while (start < all.size()) {
      auto end = all.find('\n', start);
      if (end == std::string::npos) end = all.size();
      ++line;
      auto text = all.substr(start, end - start);
      start = end + 1;
      if (utf8::trim(text).empty()) continue;
      try {
        records.push_back(nlohmann::json::parse(text));
      } catch (const nlohmann::json::parse_error& e) {
        throw DatasetError(line, std::string("malformed record: ") + e.what());
      }
    }
  }
  std::vector<Case> cases;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      cases.push_back(import_lawbench_record(records[i], i, config));
    } catch (const DatasetError& e) {
      if (config.reject_missing_fields) throw;
      spdlog::warn("skipping record: {}", e.what());
    }
  }
  return cases;
}

}  // namespace agentsbench
