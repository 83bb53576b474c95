#pragma once

// Run-directory driver behind the command-line tool.
//
// A run directory holds:
//   manifest.json      configuration, seed, model, template/script/dataset hashes
//   cases/<id>.json    one record per case (prediction, gold, transcript or raw output)
//   score.json         per-case metrics plus the run summary
//
// Runs are resumable: cases whose record has status "ok" are skipped.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "agentsbench/bench_engine.hpp"
#include "agentsbench/dataset.hpp"
#include "agentsbench/evaluation.hpp"
#include "agentsbench/llm_backend.hpp"
#include "agentsbench/prompts.hpp"
#include "agentsbench/utf8.hpp"
#include "json.hpp"

namespace agentsbench::run {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTooManyFailures = 3;

struct RunConfig {
  std::string dataset;
  std::string method = "bench";  // standard | cot | ls | bench
  std::string backend_kind = "openai";  // openai | scripted
  std::string script_path;
  std::string pool_path;
  std::string templates_dir;
  std::string output_dir;
  BackendConfig backend;
  EngineConfig engine;
  DatasetConfig dataset_config;
  int max_diff = kDefaultMaxDiff;
  int workers = 1;
  std::optional<int> limit;
  double max_failure_pct = 10.0;
  std::size_t history_budget_chars = 24000;

  void validate() const {
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (method != "standard" && method != "cot" && method != "ls" && method != "bench") {
      throw std::invalid_argument("unknown method '" + method + "'");
    }
    if (backend_kind != "openai" && backend_kind != "scripted") {
      throw std::invalid_argument("unknown backend '" + backend_kind + "'");
    }
    if (backend_kind == "scripted" && script_path.empty()) throw std::invalid_argument("scripted backend needs --script");
    if (method == "bench" && pool_path.empty()) throw std::invalid_argument("method bench needs --pool");
    if (dataset.empty()) throw std::invalid_argument("--dataset is required");
    if (output_dir.empty()) throw std::invalid_argument("--out is required");
    if (max_diff < 1) throw std::invalid_argument("max_diff must be >= 1");
    if (limit && *limit < 0) throw std::invalid_argument("limit must be >= 0");
    if (dataset_config.max_fact_chars < 1) throw std::invalid_argument("max_fact_chars must be >= 1");
    engine.validate();
  }
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary file and rename so readers never see partial files.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

inline std::string case_file_name(const std::string& id) {
  std::string safe;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
              c == '.';
    safe.push_back(ok ? c : '_');
  }
  if (safe != id || safe.empty() || safe[0] == '.') safe += "-" + utf8::hex64(utf8::fnv1a64(id)).substr(0, 8);
  return safe + ".json";
}

// Configuration fields that define the run. Workers, limit and the output
// directory may change between resumed invocations.
inline nlohmann::json config_json(const RunConfig& c) {
  const auto& e = c.engine;
  return {
      {"dataset", c.dataset},
      {"method", c.method},
      {"model", e.model},
      {"backend", c.backend_kind},
      {"base_url", c.backend_kind == "openai" ? c.backend.base_url : ""},
      {"api_key_env_var", c.backend.api_key_env_var},
      {"pool", c.pool_path},
      {"templates_dir", c.templates_dir},
      {"temperature", e.temperature},
      {"top_p", e.top_p},
      {"max_tokens", e.max_tokens ? nlohmann::json(*e.max_tokens) : nlohmann::json(nullptr)},
      {"bench_size", e.bench_size},
      {"max_rounds", e.max_rounds},
      {"parse_retries", e.parse_retries},
      {"seed", e.seed},
      {"memory_enabled", e.memory_enabled},
      {"recall_k", e.recall_k},
      {"judge_members", e.judge_members},
      {"presiding_id", e.presiding_id},
      {"max_fact_chars", c.dataset_config.max_fact_chars},
      {"reject_missing_fields", c.dataset_config.reject_missing_fields},
      {"max_term_months", c.dataset_config.max_term_months},
      {"max_diff", c.max_diff},
      {"history_budget_chars", c.history_budget_chars},
  };
}

inline nlohmann::json manifest_json(const RunConfig& c, const PromptTemplateSet& templates) {
  nlohmann::json m = {{"config", config_json(c)}, {"seed", c.engine.seed}, {"model", c.engine.model}};
  m["template_hashes"] = templates.hashes();
  m["dataset_hash"] = utf8::hex64(utf8::fnv1a64(read_file(c.dataset)));
  if (!c.pool_path.empty()) m["pool_hash"] = utf8::hex64(utf8::fnv1a64(read_file(c.pool_path)));
  if (c.backend_kind == "scripted") m["script_hash"] = utf8::hex64(utf8::fnv1a64(read_file(c.script_path)));
  return m;
}

inline std::shared_ptr<Backend> make_backend(const RunConfig& c) {
  if (c.backend_kind == "scripted") return make_scripted_backend(load_script(c.script_path));
  return std::make_shared<OpenAIBackend>(c.backend);
}

inline PromptTemplateSet load_templates(const std::string& dir, std::size_t history_budget) {
  auto t = dir.empty() ? PromptTemplateSet::defaults() : PromptTemplateSet::load(dir);
  t.history_budget_chars = history_budget;
  return t;
}

inline bool case_completed(const fs::path& file) {
  if (!fs::exists(file)) return false;
  try {
    auto j = nlohmann::json::parse(read_file(file));
    return j.value("status", "") == "ok";
  } catch (const std::exception&) {
    return false;
  }
}

struct ScoreResult {
  RunSummary summary;
  std::vector<MetricResult> metrics;
};

// Recomputes metrics from the persisted case records.
inline ScoreResult score_run_dir(const fs::path& dir, std::optional<int> max_diff_override = std::nullopt,
                                 const std::vector<QualityAnnotation>* annotations = nullptr) {
  auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  const auto& cfg = manifest.at("config");
  int max_diff = max_diff_override.value_or(cfg.value("max_diff", kDefaultMaxDiff));

  std::vector<fs::path> files;
  if (fs::is_directory(dir / "cases")) {
    for (const auto& e : fs::directory_iterator(dir / "cases")) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("run directory '" + dir.string() + "' has no case records");

  ScoreResult out;
  out.summary.method = cfg.at("method").get<std::string>();
  out.summary.model = cfg.at("model").get<std::string>();
  for (const auto& f : files) {
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(read_file(f));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("corrupt case record '" + f.string() + "': " + e.what());
    }
    std::optional<int> predicted;
    if (rec.value("status", "") == "ok" && rec.contains("predicted_months") && !rec["predicted_months"].is_null()) {
      predicted = rec["predicted_months"].get<int>();
    }
    if (!predicted) ++out.summary.unparsed_count;
    out.metrics.push_back(score_case(rec.at("case_id").get<std::string>(), predicted, rec.at("gold_months").get<int>(),
                                     max_diff));
  }
  std::sort(out.metrics.begin(), out.metrics.end(),
            [](const MetricResult& a, const MetricResult& b) { return a.case_id < b.case_id; });
  out.summary.case_count = static_cast<int>(out.metrics.size());
  out.summary.mean_performance_pct = aggregate_performance(out.metrics);
  if (annotations != nullptr) {
    auto rates = quality_rates(*annotations);
    out.summary.legality_pct = rates.legality;
    out.summary.logicality_pct = rates.logicality;
    out.summary.morality_pct = rates.morality;
  }
  return out;
}

inline void write_score(const fs::path& dir, const ScoreResult& s) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : s.metrics) metrics.push_back(to_json(m));
  write_file_atomic(dir / "score.json", nlohmann::json{{"summary", to_json(s.summary)}, {"metrics", metrics}}.dump(2) + "\n");
}

struct RunStats {
  int processed = 0;
  int skipped = 0;
  int failed = 0;
};

// `backend` overrides the one built from the configuration (tests inject
// scripted backends this way).
inline int cmd_run(const RunConfig& config, std::shared_ptr<Backend> backend = nullptr, RunStats* stats_out = nullptr,
                   std::ostream& out = std::cout) {
  try {
    config.validate();
  } catch (const std::exception& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  }
  std::vector<Case> cases;
  std::vector<AgentProfile> pool;
  std::optional<PromptTemplateSet> templates;
  fs::path dir(config.output_dir);
  try {
    cases = load_cases(config.dataset, config.dataset_config);
    if (config.method == "bench") pool = load_agent_pool(config.pool_path);
    templates = load_templates(config.templates_dir, config.history_budget_chars);
    if (!backend) backend = make_backend(config);

    fs::create_directories(dir / "cases");
    auto manifest = manifest_json(config, *templates);
    auto manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
      auto existing = nlohmann::json::parse(read_file(manifest_path));
      if (existing.at("config") != manifest.at("config") ||
          existing.value("template_hashes", nlohmann::json()) != manifest.at("template_hashes")) {
        spdlog::error("run directory {} was created with a different configuration", dir.string());
        return kExitConfig;
      }
    } else {
      write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  }

  if (config.limit && static_cast<std::size_t>(*config.limit) < cases.size()) cases.resize(*config.limit);

  int workers = config.workers;
  if (config.backend_kind == "scripted" && workers > 1) {
    spdlog::warn("scripted backend replays in order; using 1 worker");
    workers = 1;
  }

  PrecedentMemory memory;
  BenchEngine engine(*backend, *templates, config.engine, &memory);
  std::optional<BaselineMethod> baseline;
  if (config.method != "bench") baseline = parse_baseline_method(config.method);

  std::atomic<std::size_t> next{0};
  std::mutex stats_mu;
  RunStats stats;

  auto process = [&](const Case& c) {
    auto file = dir / "cases" / case_file_name(c.id);
    if (case_completed(file)) {
      std::lock_guard lock(stats_mu);
      ++stats.skipped;
      return;
    }
    nlohmann::json rec = {{"case_id", c.id}, {"method", config.method}, {"gold_months", c.gold_term_months}};
    bool failed = false;
    try {
      if (baseline) {
        std::string raw;
        auto predicted = engine.run_baseline_case(c, *baseline, &raw);
        rec["status"] = "ok";
        rec["predicted_months"] = predicted ? nlohmann::json(*predicted) : nlohmann::json(nullptr);
        rec["raw_output"] = raw;
      } else {
        auto t = engine.run_case(c, pool);
        rec["status"] = "ok";
        rec["predicted_months"] = t.final->term_months;
        rec["transcript"] = to_json(t);
      }
    } catch (const CaseError& e) {
      failed = true;
      rec["status"] = "failed";
      rec["error"] = e.what();
      rec["predicted_months"] = nullptr;
      rec["transcript"] = to_json(e.transcript());
    } catch (const std::exception& e) {
      failed = true;
      rec["status"] = "failed";
      rec["error"] = e.what();
      rec["predicted_months"] = nullptr;
    }
    if (failed) spdlog::warn("case {} failed: {}", c.id, rec["error"].get<std::string>());
    write_file_atomic(file, rec.dump(2) + "\n");
    std::lock_guard lock(stats_mu);
    ++stats.processed;
    if (failed) ++stats.failed;
  };

  {
    std::vector<std::jthread> pool_threads;
    for (int w = 0; w < workers; ++w) {
      pool_threads.emplace_back([&] {
        for (std::size_t i = next++; i < cases.size(); i = next++) process(cases[i]);
      });
    }
  }

  if (stats_out != nullptr) *stats_out = stats;
  out << "processed " << stats.processed << ", skipped " << stats.skipped << ", failed " << stats.failed << "\n";

  try {
    if (!cases.empty()) {
      auto score = score_run_dir(dir);
      write_score(dir, score);
      out << "performance " << detail::fixed2(score.summary.mean_performance_pct) << "% over "
          << score.summary.case_count << " cases (" << score.summary.unparsed_count << " unparsed)\n";
    }
  } catch (const std::exception& e) {
    spdlog::error("scoring failed: {}", e.what());
    return kExitFailure;
  }

  if (stats.processed > 0 && 100.0 * stats.failed / stats.processed > config.max_failure_pct) {
    spdlog::error("{} of {} cases failed (threshold {}%)", stats.failed, stats.processed, config.max_failure_pct);
    return kExitTooManyFailures;
  }
  return kExitOk;
}

inline int cmd_score(const std::string& run_dir, std::optional<int> max_diff, const std::string& annotations_path,
                     std::ostream& out = std::cout) {
  try {
    std::optional<std::vector<QualityAnnotation>> annotations;
    if (!annotations_path.empty()) annotations = load_annotations(annotations_path);
    auto score = score_run_dir(run_dir, max_diff, annotations ? &*annotations : nullptr);
    write_score(run_dir, score);
    out << detail::fixed2(score.summary.mean_performance_pct) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

inline int cmd_kappa(const std::string& annotations_path, std::ostream& out = std::cout) {
  try {
    auto annotations = load_annotations(annotations_path);
    auto rates = quality_rates(annotations);
    out << "criterion    pairwise_kappa  majority_true_pct\n";
    for (auto c : kCriteria) {
      std::ostringstream row;
      row << std::left << std::setw(12) << criterion_name(c) << " " << std::setw(15) << std::fixed
          << std::setprecision(4) << pairwise_mean_kappa(annotations, c) << " " << std::setprecision(2)
          << rates.get(c) << "\n";
      out << row.str();
    }
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

inline int cmd_report(const std::vector<std::string>& run_dirs, ReportFormat format, std::ostream& out = std::cout) {
  try {
    std::vector<RunSummary> summaries;
    for (const auto& d : run_dirs) {
      auto path = fs::path(d) / "score.json";
      if (!fs::exists(path)) throw std::runtime_error("missing " + path.string() + " (run `score` first)");
      summaries.push_back(summary_from_json(nlohmann::json::parse(read_file(path)).at("summary")));
    }
    out << render_report(std::move(summaries), format);
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

// One line, at most 100 characters.
inline std::string preview_line(std::string_view text) {
  std::string flat;
  for (char ch : utf8::trim(text)) {
    bool space = ch == '\n' || ch == '\r' || ch == '\t' || ch == ' ';
    if (!space) flat += ch;
    else if (!flat.empty() && flat.back() != ' ') flat += ' ';
  }
  if (utf8::length(flat) <= 100) return flat;
  return utf8::prefix(flat, 100) + "…";
}

inline void print_transcript(const Transcript& t, std::ostream& out) {
  auto label = [&](const std::string& id) { return detail::speaker_label(t.bench, id); };
  out << "Case " << t.case_id << "\n\nIndependent sentencing:\n";
  for (const auto& o : t.initial.opinions) out << "  " << label(o.agent_id) << ": " << o.term_months << " months\n";
  for (const auto& a : t.initial.abstained) out << "  " << label(a) << ": abstained\n";
  for (const auto& r : t.rounds) {
    out << "\nRound " << r.index << ":\n";
    for (const auto& s : r.statements) out << "  [" << label(s.agent_id) << "] " << preview_line(s.text) << "\n";
    out << "  Consensus: " << (r.verdict.consensus ? "Yes" : "No") << (r.verdict_fallback ? " (unreadable verdict)" : "")
        << "\n";
    if (!r.verdict.summary.empty()) out << "    " << preview_line(r.verdict.summary) << "\n";
    if (r.updated_opinions) {
      for (const auto& o : r.updated_opinions->opinions) {
        out << "  " << label(o.agent_id) << " -> " << o.term_months << " months"
            << (o.carried_forward ? " (carried forward)" : "") << "\n";
      }
    }
  }
  if (t.final) {
    out << "\nFinal: " << t.final->term_months << " months (consensus: " << (t.final->consensus_reached ? "yes" : "no")
        << ", rounds: " << t.final->rounds_used << (t.final->fallback ? ", median fallback" : "") << ")\n";
  }
}

inline int cmd_replay(const std::string& script_path, const std::string& case_path, const std::string& pool_path,
                      const EngineConfig& engine_config, const std::string& case_id, bool as_json,
                      std::ostream& out = std::cout) {
  try {
    DatasetConfig dc;
    dc.reject_missing_fields = true;
    auto cases = load_cases(case_path, dc);
    if (cases.empty()) throw std::runtime_error("no cases in '" + case_path + "'");
    const Case* c = &cases.front();
    if (!case_id.empty()) {
      auto it = std::find_if(cases.begin(), cases.end(), [&](const Case& x) { return x.id == case_id; });
      if (it == cases.end()) throw std::runtime_error("case '" + case_id + "' not found");
      c = &*it;
    }
    auto pool = load_agent_pool(pool_path);
    auto backend = make_scripted_backend(load_script(script_path));
    BenchEngine engine(*backend, PromptTemplateSet::defaults(), engine_config);
    Transcript t;
    int rc = kExitOk;
    try {
      t = engine.run_case(*c, pool);
    } catch (const CaseError& e) {
      t = e.transcript();
      rc = kExitFailure;
    }
    if (as_json) {
      out << to_json(t).dump(2) << "\n";
    } else {
      print_transcript(t, out);
      if (rc != kExitOk) out << "\nFailed: " << t.error << "\n";
    }
    return rc;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

inline int cmd_validate(const std::string& path, const DatasetConfig& config, std::ostream& out = std::cout) {
  try {
    auto diags = validate_cases(path, config);
    int bad = 0;
    for (const auto& d : diags) {
      out << "line " << d.line << ": " << (d.ok ? d.case_id + " " : std::string()) << d.message << "\n";
      if (!d.ok) ++bad;
    }
    out << diags.size() << " records, " << bad << " invalid\n";
    return bad == 0 ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

enum class ParseMode { kTerm, kOpinion, kConsensus };

inline int cmd_parse(std::istream& in, ParseMode mode, std::ostream& out = std::cout) {
  std::stringstream ss;
  ss << in.rdbuf();
  auto text = ss.str();
  switch (mode) {
    case ParseMode::kTerm: {
      auto m = extract_prison_term_months(text);
      out << (m ? std::to_string(*m) : "none") << "\n";
      return m ? kExitOk : kExitFailure;
    }
    case ParseMode::kOpinion: {
      auto p = parse_opinion(text);
      if (!p) {
        out << "unparseable\n";
        return kExitFailure;
      }
      out << nlohmann::json{{"term_months", p->term_months}, {"rationale", p->rationale}}.dump() << "\n";
      return kExitOk;
    }
    case ParseMode::kConsensus: {
      auto p = parse_consensus(text);
      if (!p) {
        out << "unparseable\n";
        return kExitFailure;
      }
      out << nlohmann::json{{"consensus", p->consensus}, {"summary", p->summary}}.dump() << "\n";
      return kExitOk;
    }
  }
  return kExitFailure;
}

inline int cmd_import(const std::string& in_path, const std::string& out_path, const DatasetConfig& config,
                      std::ostream& out = std::cout) {
  try {
    auto cases = import_lawbench(in_path, config);
    write_file_atomic(out_path, serialize_cases(cases));
    out << "imported " << cases.size() << " cases\n";
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
}

}  // namespace agentsbench::run
