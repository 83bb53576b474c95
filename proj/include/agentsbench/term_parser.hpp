#pragma once

// Prison-term extraction from free text, plus the structured-output parsers
// for agent opinions and consensus verdicts.
//
// Terms are recognized only when a number (Arabic or Chinese) is followed by
// a time unit: 年 / 个月 / 月, or English "year(s)" / "month(s)". Bare
// numbers such as money amounts and article numbers never match.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "agentsbench/utf8.hpp"

namespace agentsbench {

class TermError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParsedOpinion {
  int term_months = 0;
  std::string rationale;

  bool operator==(const ParsedOpinion&) const = default;
};

struct ConsensusParse {
  bool consensus = false;
  std::string summary;

  bool operator==(const ConsensusParse&) const = default;
};

// Output-format markers shared by the prompt builders and the parsers.
namespace markers {
inline constexpr std::string_view kTermEn = "Sentence Term";
inline constexpr std::string_view kTermZh = "刑期";
inline constexpr std::string_view kReasonEn = "Reason";
inline constexpr std::string_view kReasonZh = "理由";
inline constexpr std::string_view kConclusionEn = "Conclusion";
inline constexpr std::string_view kConclusionZh = "结论";
}  // namespace markers

namespace detail {

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0x3000 ||
         c == 0xA0;
}
inline bool is_ascii_digit(char32_t c) { return c >= U'0' && c <= U'9'; }
inline bool is_fullwidth_digit(char32_t c) { return c >= 0xFF10 && c <= 0xFF19; }
inline bool is_digit(char32_t c) { return is_ascii_digit(c) || is_fullwidth_digit(c); }
inline int digit_value(char32_t c) {
  return is_ascii_digit(c) ? static_cast<int>(c - U'0') : static_cast<int>(c - 0xFF10);
}
inline bool is_ascii_alpha(char32_t c) { return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'); }
inline char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c - U'A' + U'a' : c; }

inline int cn_digit(char32_t c) {
  switch (c) {
    case U'零': case U'〇': return 0;
    case U'一': return 1;
    case U'二': case U'两': return 2;
    case U'三': return 3;
    case U'四': return 4;
    case U'五': return 5;
    case U'六': return 6;
    case U'七': return 7;
    case U'八': return 8;
    case U'九': return 9;
    default: return -1;
  }
}
inline int cn_unit(char32_t c) {
  switch (c) {
    case U'十': return 10;
    case U'百': return 100;
    case U'千': return 1000;
    default: return 0;
  }
}
inline bool is_cn_numeral(char32_t c) { return cn_digit(c) >= 0 || cn_unit(c) > 0; }

// Case-insensitive ASCII match of `word` at position i.
inline bool match_at(const std::u32string& s, std::size_t i, std::u32string_view word) {
  if (i + word.size() > s.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k) {
    if (ascii_lower(s[i + k]) != ascii_lower(word[k])) return false;
  }
  return true;
}

inline std::optional<int> cn_to_int(std::u32string_view s) {
  if (s.empty()) return std::nullopt;
  bool has_unit = false;
  for (char32_t c : s) {
    if (!is_cn_numeral(c)) return std::nullopt;
    if (cn_unit(c) > 0) has_unit = true;
  }
  if (!has_unit) {
    // Positional digit string, e.g. 二〇一二.
    if (s.size() > 4) return std::nullopt;
    int v = 0;
    for (char32_t c : s) v = v * 10 + cn_digit(c);
    return v;
  }
  int total = 0;
  int pending = -1;       // digit waiting for a unit
  int last_unit = 10000;  // units must strictly decrease
  bool zero_since_unit = false;
  for (char32_t c : s) {
    int d = cn_digit(c);
    if (d == 0) {
      if (pending > 0) return std::nullopt;
      zero_since_unit = true;
      pending = -1;
      continue;
    }
    if (d > 0) {
      if (pending > 0) return std::nullopt;
      pending = d;
      continue;
    }
    int u = cn_unit(c);
    if (u >= last_unit) return std::nullopt;
    if (pending < 0) {
      // Bare unit: 十 = 10, 一百十 = 110. A unit right after 零 is malformed.
      if (zero_since_unit) return std::nullopt;
      pending = 1;
    }
    total += pending * u;
    pending = -1;
    last_unit = u;
    zero_since_unit = false;
  }
  if (pending > 0) {
    // Abbreviated trailing digit: 三百六 = 360, 一千二 = 1200.
    if (!zero_since_unit && last_unit >= 100) {
      total += pending * (last_unit / 10);
    } else {
      total += pending;
    }
  }
  return total;
}

enum class Unit { kYear, kMonth };

struct TermHit {
  std::size_t begin = 0;
  std::size_t end = 0;
  Unit unit = Unit::kMonth;
  double value = 0;  // numeric value in `unit`
  bool half = false;  // trailing 半 on a year
};

struct NumberToken {
  std::size_t begin = 0;
  std::size_t end = 0;
  double value = 0;
  bool arabic = false;
};

inline std::optional<NumberToken> read_number(const std::u32string& s, std::size_t i) {
  NumberToken tok;
  tok.begin = i;
  if (is_digit(s[i])) {
    tok.arabic = true;
    double v = 0;
    std::size_t j = i;
    while (j < s.size()) {
      if (is_digit(s[j])) {
        v = v * 10 + digit_value(s[j]);
        ++j;
      } else if (s[j] == U',' && j + 3 < s.size() && is_digit(s[j + 1]) && is_digit(s[j + 2]) &&
                 is_digit(s[j + 3]) && (j + 4 >= s.size() || !is_digit(s[j + 4]))) {
        // thousands separator: 300,000
        ++j;
      } else {
        break;
      }
    }
    if (j < s.size() && s[j] == U'.' && j + 1 < s.size() && is_digit(s[j + 1])) {
      double scale = 0.1;
      ++j;
      while (j < s.size() && is_digit(s[j])) {
        v += scale * digit_value(s[j]);
        scale /= 10;
        ++j;
      }
    }
    tok.end = j;
    tok.value = v;
    return tok;
  }
  if (is_cn_numeral(s[i])) {
    std::size_t j = i;
    while (j < s.size() && is_cn_numeral(s[j])) ++j;
    auto v = cn_to_int(std::u32string_view(s).substr(i, j - i));
    if (!v) return std::nullopt;
    tok.end = j;
    tok.value = *v;
    return tok;
  }
  return std::nullopt;
}

inline bool english_word_end(const std::u32string& s, std::size_t j) { return j >= s.size() || !is_ascii_alpha(s[j]); }

// Reads a unit right after a number token. Returns the hit or nullopt.
inline std::optional<TermHit> read_unit(const std::u32string& s, const NumberToken& tok) {
  std::size_t j = tok.end;
  while (j < s.size() && (s[j] == U' ' || s[j] == 0x3000)) ++j;
  if (j >= s.size()) return std::nullopt;
  TermHit hit;
  hit.begin = tok.begin;
  hit.value = tok.value;
  if (s[j] == U'年') {
    if (j + 1 < s.size()) {
      char32_t n = s[j + 1];
      if (n == U'度' || n == U'代' || n == U'龄' || n == U'级' || n == U'初' || n == U'底' || n == U'末' ||
          n == U'间') {
        return std::nullopt;
      }
    }
    // Calendar years (2012年) are dates, not terms.
    if (tok.arabic && tok.value >= 1000) return std::nullopt;
    hit.unit = Unit::kYear;
    hit.end = j + 1;
    if (hit.end < s.size() && s[hit.end] == U'半') {
      hit.half = true;
      ++hit.end;
    }
    return hit;
  }
  if ((s[j] == U'个' || s[j] == U'個') && j + 1 < s.size() && s[j + 1] == U'月') {
    hit.unit = Unit::kMonth;
    hit.end = j + 2;
    return hit;
  }
  if (s[j] == U'月') {
    if (j + 1 < s.size()) {
      char32_t n = s[j + 1];
      if (n == U'日' || n == U'号' || n == U'份' || n == U'底' || n == U'初' || n == U'中' || n == U'末') {
        return std::nullopt;
      }
      // "5月3日" is a date.
      std::size_t k = j + 1;
      while (k < s.size() && (is_digit(s[k]) || is_cn_numeral(s[k]))) ++k;
      if (k > j + 1 && k < s.size() && (s[k] == U'日' || s[k] == U'号')) return std::nullopt;
    }
    hit.unit = Unit::kMonth;
    hit.end = j + 1;
    return hit;
  }
  // English: "60 months", "5 years", "54-month".
  std::size_t k = tok.end;
  if (k < s.size() && (s[k] == U'-' || s[k] == U' ')) ++k;
  static constexpr std::u32string_view kEnglish[] = {U"months", U"month", U"years", U"year", U"yrs", U"mos"};
  for (auto word : kEnglish) {
    if (match_at(s, k, word) && english_word_end(s, k + word.size())) {
      hit.unit = (word[0] == U'y') ? Unit::kYear : Unit::kMonth;
      if (hit.unit == Unit::kYear && tok.arabic && tok.value >= 1000) return std::nullopt;
      hit.end = k + word.size();
      return hit;
    }
  }
  return std::nullopt;
}

inline std::vector<TermHit> scan_units(const std::u32string& s) {
  std::vector<TermHit> hits;
  std::size_t i = 0;
  std::size_t calendar_end = std::u32string::npos;
  while (i < s.size()) {
    if (s[i] == U'半' && i + 1 < s.size() && s[i + 1] == U'年' && (i == 0 || !is_cn_numeral(s[i - 1]))) {
      hits.push_back({i, i + 2, Unit::kMonth, 6.0, false});
      i += 2;
      continue;
    }
    bool starts_number = is_digit(s[i]) || is_cn_numeral(s[i]);
    if (!starts_number) {
      ++i;
      continue;
    }
    // Skip a number glued to a preceding ASCII letter or digit (e.g. "A3").
    auto tok = read_number(s, i);
    if (!tok) {
      // Skip the whole run so a malformed numeral run is not re-read from inside.
      std::size_t j = i;
      while (j < s.size() && (is_digit(s[j]) || is_cn_numeral(s[j]))) ++j;
      i = j;
      continue;
    }
    if (tok->arabic && i > 0 && is_ascii_alpha(s[i - 1])) {
      i = tok->end;
      continue;
    }
    auto hit = read_unit(s, *tok);
    if (hit) {
      // "2012年1月" - month right after a calendar year is a date.
      if (hit->unit == Unit::kMonth && calendar_end == hit->begin && s[hit->end - 1] == U'月' &&
          (hit->end < 2 || s[hit->end - 2] != U'个')) {
        i = hit->end;
        continue;
      }
      hits.push_back(*hit);
      i = hit->end;
      continue;
    }
    if (tok->arabic && tok->value >= 1000 && tok->end < s.size() && s[tok->end] == U'年') {
      calendar_end = tok->end + 1;
    }
    i = tok->end;
  }
  return hits;
}

struct TermExpr {
  std::size_t begin = 0;
  std::size_t end = 0;
  long long months = 0;
};

inline long long hit_months(const TermHit& h) {
  double m = h.unit == Unit::kYear ? h.value * 12.0 + (h.half ? 6.0 : 0.0) : h.value;
  return static_cast<long long>(std::floor(m + 1e-9));
}

inline bool joinable_gap(const std::u32string& s, std::size_t from, std::size_t to) {
  std::size_t i = from;
  while (i < to) {
    char32_t c = s[i];
    if (is_space(c) || c == U'零' || c == U'又' || c == U',' || c == U'，' || c == U'、') {
      ++i;
    } else if (match_at(s, i, U"and")) {
      i += 3;
    } else {
      return false;
    }
  }
  return true;
}

// Year and month hits merged into complete term expressions.
inline std::vector<TermExpr> scan_terms(const std::u32string& s) {
  auto hits = scan_units(s);
  std::vector<TermExpr> out;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const auto& h = hits[k];
    TermExpr e{h.begin, h.end, hit_months(h)};
    if (h.unit == Unit::kYear && !h.half && k + 1 < hits.size() && hits[k + 1].unit == Unit::kMonth &&
        joinable_gap(s, h.end, hits[k + 1].begin)) {
      e.months += hit_months(hits[k + 1]);
      e.end = hits[k + 1].end;
      ++k;
    }
    if (e.months >= 0 && e.months <= std::numeric_limits<int>::max()) out.push_back(e);
  }
  return out;
}

// Position just past a "<marker>[*]*[:：]" occurrence starting at i, or npos.
inline std::size_t marker_end(const std::u32string& s, std::size_t i, std::u32string_view marker) {
  if (!match_at(s, i, marker)) return std::u32string::npos;
  if (is_ascii_alpha(marker[0]) && i > 0 && is_ascii_alpha(s[i - 1])) return std::u32string::npos;
  std::size_t j = i + marker.size();
  while (j < s.size() && (s[j] == U'*' || s[j] == U' ')) ++j;
  if (j >= s.size() || (s[j] != U':' && s[j] != U'：')) return std::u32string::npos;
  ++j;
  while (j < s.size() && (s[j] == U'*' || s[j] == U' ' || s[j] == 0x3000 || s[j] == U'\t')) ++j;
  return j;
}

struct MarkerHit {
  std::size_t begin = 0;
  std::size_t value_begin = 0;
};

inline std::vector<MarkerHit> find_markers(const std::u32string& s, std::u32string_view en, std::u32string_view zh) {
  std::vector<MarkerHit> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t e = marker_end(s, i, en);
    if (e == std::u32string::npos) e = marker_end(s, i, zh);
    if (e != std::u32string::npos) {
      std::size_t b = i;
      while (b > 0 && s[b - 1] == U'*') --b;
      out.push_back({b, e});
    }
  }
  return out;
}

inline std::optional<int> leading_number(const std::u32string& s, std::size_t i, std::size_t end) {
  if (i >= end) return std::nullopt;
  auto tok = read_number(s, i);
  if (!tok || tok->end > end) return std::nullopt;
  if (tok->value < 0 || tok->value > std::numeric_limits<int>::max()) return std::nullopt;
  return static_cast<int>(std::floor(tok->value + 1e-9));
}

}  // namespace detail

// Reads a Chinese numeral in 零一二两三四五六七八九十百千 (0..9999).
inline int chinese_numeral_to_int(std::string_view text) {
  auto s = utf8::decode(text);
  for (char32_t c : s) {
    if (!detail::is_cn_numeral(c)) {
      throw TermError("not a Chinese numeral: '" + std::string(text) + "'");
    }
  }
  auto v = detail::cn_to_int(s);
  if (!v) throw TermError("malformed Chinese numeral: '" + std::string(text) + "'");
  return *v;
}

// Months of the last complete term expression in `text`, or nullopt.
inline std::optional<int> extract_prison_term_months(std::string_view text) {
  auto s = utf8::decode(text);
  auto terms = detail::scan_terms(s);
  if (terms.empty()) return std::nullopt;
  return static_cast<int>(terms.back().months);
}

// Reads "Sentence Term: N months" / "刑期：N个月" plus "Reason:" / "理由：".
// Falls back to the last term anywhere in the text when the term marker is
// missing. nullopt when no term can be recovered.
inline std::optional<ParsedOpinion> parse_opinion(std::string_view text) {
  auto s = utf8::decode(text);
  auto term_markers = detail::find_markers(s, U"Sentence Term", U"刑期");
  auto reason_markers = detail::find_markers(s, U"Reason", U"理由");

  std::optional<int> term;
  for (auto it = term_markers.rbegin(); it != term_markers.rend() && !term; ++it) {
    std::size_t end = it->value_begin;
    while (end < s.size() && s[end] != U'\n') ++end;
    for (const auto& r : reason_markers) {
      if (r.begin > it->value_begin && r.begin < end) end = r.begin;
    }
    auto segment = s.substr(it->value_begin, end - it->value_begin);
    auto terms = detail::scan_terms(segment);
    if (!terms.empty()) {
      term = static_cast<int>(terms.front().months);
    } else {
      term = detail::leading_number(segment, 0, segment.size());
    }
  }
  if (!term) term = extract_prison_term_months(text);
  if (!term) return std::nullopt;

  ParsedOpinion out;
  out.term_months = *term;
  if (!reason_markers.empty()) {
    out.rationale = utf8::trim(utf8::encode(std::u32string_view(s).substr(reason_markers.back().value_begin)));
  } else {
    out.rationale = utf8::trim(text);
  }
  return out;
}

// Reads "Conclusion: Yes|No" / "结论：是|否". The rest of the text becomes the
// summary. nullopt when the marker is absent, unreadable, or contradictory.
inline std::optional<ConsensusParse> parse_consensus(std::string_view text) {
  auto s = utf8::decode(text);
  auto found = detail::find_markers(s, U"Conclusion", U"结论");

  std::optional<bool> verdict;
  std::u32string summary;
  std::size_t copied = 0;
  bool any = false;
  for (const auto& m : found) {
    std::size_t line_end = m.value_begin;
    while (line_end < s.size() && s[line_end] != U'\n') ++line_end;
    auto rest = std::u32string_view(s).substr(m.value_begin, line_end - m.value_begin);

    std::optional<bool> value;
    std::size_t value_len = 0;
    if (detail::match_at(s, m.value_begin, U"yes") && detail::english_word_end(s, m.value_begin + 3)) {
      value = true;
      value_len = 3;
    } else if (detail::match_at(s, m.value_begin, U"no") && detail::english_word_end(s, m.value_begin + 2)) {
      value = false;
      value_len = 2;
    } else if (!rest.empty() && (rest.starts_with(U"未达成") || rest.starts_with(U"没有") || rest[0] == U'否')) {
      value = false;
      value_len = rest[0] == U'否' ? 1 : 3;
    } else if (!rest.empty() && (rest.starts_with(U"已达成") || rest.starts_with(U"达成") || rest[0] == U'是')) {
      value = true;
      value_len = rest[0] == U'是' ? 1 : (rest.starts_with(U"已达成") ? 3 : 2);
    }
    if (!value) continue;

    // "Yes/No" or "Yes or No" on the verdict line is ambiguous.
    auto tail = std::u32string(rest.substr(value_len));
    std::u32string lowered;
    for (char32_t c : tail.substr(0, 12)) lowered.push_back(detail::ascii_lower(c));
    bool opposite = *value ? (lowered.find(U"no") != std::u32string::npos && lowered.find(U"/") != std::u32string::npos) ||
                                 tail.starts_with(U"/否") || tail.starts_with(U"或否")
                           : (lowered.find(U"yes") != std::u32string::npos) || tail.starts_with(U"/是") ||
                                 tail.starts_with(U"或是");
    if (opposite) return std::nullopt;
    if (verdict && *verdict != *value) return std::nullopt;
    verdict = value;
    any = true;

    std::size_t cut_end = m.value_begin + value_len;
    while (cut_end < s.size() && (s[cut_end] == U'*' || s[cut_end] == U'.' || s[cut_end] == U'。')) ++cut_end;
    summary.append(s, copied, m.begin - copied);
    copied = cut_end;
  }
  if (!any) return std::nullopt;
  summary.append(s, copied, std::u32string::npos);

  ConsensusParse out;
  out.consensus = *verdict;
  out.summary = utf8::trim(utf8::encode(summary));
  if (!out.consensus && out.summary.empty()) return std::nullopt;
  return out;
}

}  // namespace agentsbench
