#pragma once

// Shared fixtures and independent oracles for the unit and acceptance suites.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "agentsbench/agentsbench.hpp"

#ifndef AB_DATA_DIR
#error "AB_DATA_DIR must point at the data/ directory"
#endif

namespace abtest {

namespace fs = std::filesystem;
namespace ab = agentsbench;

inline fs::path data_path(const std::string& name) { return fs::path(AB_DATA_DIR) / name; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("abtest-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline ab::Case worked_case() { return ab::load_cases(data_path("worked_case.jsonl").string(), {}).at(0); }
inline std::vector<ab::AgentProfile> worked_pool() { return ab::load_agent_pool(data_path("worked_pool.jsonl").string()); }
inline std::vector<std::string> worked_script() { return ab::load_script(data_path("worked_script.json").string()); }

inline ab::Case simple_case(std::string id = "c1", int gold = 36) {
  return {std::move(id), "被告人张某于某日在某超市盗窃财物，价值人民币四千元，案发后退赔。", "盗窃罪",
          "第二百六十四条 盗窃公私财物，数额较大的，处三年以下有期徒刑、拘役或者管制，并处或者单处罚金。", gold};
}

// Chinese numeral rendering written independently of the parser. `liang`
// renders a leading 2 before 百/千 as 两; `yi_shi` renders 10-19 as 一十X.
inline std::string render_cn(int n, bool liang = false, bool yi_shi = false) {
  static const char* d[] = {"零", "一", "二", "三", "四", "五", "六", "七", "八", "九"};
  if (n == 0) return "零";
  std::string out;
  int thousands = n / 1000, hundreds = n / 100 % 10, tens = n / 10 % 10, ones = n % 10;
  bool need_zero = false;
  if (thousands) {
    out += (liang && thousands == 2) ? "两" : d[thousands];
    out += "千";
  }
  if (hundreds) {
    out += (liang && hundreds == 2) ? "两" : d[hundreds];
    out += "百";
  } else if (thousands && (tens || ones)) {
    need_zero = true;
  }
  if (tens) {
    if (need_zero) out += "零";
    need_zero = false;
    if (tens == 1 && out.empty() && !yi_shi) {
      out += "十";
    } else {
      out += d[tens];
      out += "十";
    }
  } else if ((thousands || hundreds) && ones) {
    need_zero = true;
  }
  if (ones) {
    if (need_zero) out += "零";
    out += d[ones];
  }
  return out;
}

// Arabic digits rendered with the other parser-accepted digit forms.
inline std::string fullwidth_digits(int n) {
  std::string out;
  for (char c : std::to_string(n)) {
    char32_t cp = 0xFF10 + (c - '0');
    ab::utf8::append(out, cp);
  }
  return out;
}

// Cohen's kappa from the four contingency counts, computed from the
// marginals directly (not via the library's per-item loop).
inline double kappa_from_table(int tt, int tf, int ft, int ff) {
  double n = tt + tf + ft + ff;
  double po = (tt + ff) / n;
  double a_true = (tt + tf) / n, b_true = (tt + ft) / n;
  double pe = a_true * b_true + (1 - a_true) * (1 - b_true);
  if (std::fabs(1 - pe) < 1e-15) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1 - pe);
}

inline std::pair<std::vector<bool>, std::vector<bool>> vectors_from_table(int tt, int tf, int ft, int ff) {
  std::vector<bool> a, b;
  auto push = [&](int count, bool x, bool y) {
    for (int i = 0; i < count; ++i) {
      a.push_back(x);
      b.push_back(y);
    }
  };
  push(tt, true, true);
  push(tf, true, false);
  push(ft, false, true);
  push(ff, false, false);
  return {a, b};
}

// True when `body` contains `value` as a number token not adjacent to other
// digits.
inline bool contains_number_token(const std::string& body, int value) {
  auto needle = std::to_string(value);
  for (std::size_t pos = body.find(needle); pos != std::string::npos; pos = body.find(needle, pos + 1)) {
    bool left = pos == 0 || !std::isdigit(static_cast<unsigned char>(body[pos - 1]));
    std::size_t end = pos + needle.size();
    bool right = end >= body.size() || !std::isdigit(static_cast<unsigned char>(body[end]));
    if (left && right) return true;
  }
  return false;
}

inline bool request_log_leaks(const std::vector<ab::CompletionRequest>& log, int gold) {
  for (const auto& r : log) {
    if (contains_number_token(ab::request_body(r).dump(), gold)) return true;
  }
  return false;
}

}  // namespace abtest
