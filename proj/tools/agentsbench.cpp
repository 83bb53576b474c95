// agentsbench command-line tool.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "agentsbench/agentsbench.hpp"

namespace ab = agentsbench;

namespace {

void add_engine_options(CLI::App* cmd, ab::EngineConfig& e) {
  cmd->add_option("--bench-size", e.bench_size, "Bench size, presiding judge included");
  cmd->add_option("--max-rounds", e.max_rounds, "Deliberation rounds before synthesis");
  cmd->add_option("--parse-retries", e.parse_retries, "Corrective re-asks per unparseable reply");
  cmd->add_option("--seed", e.seed, "Bench selection seed");
  cmd->add_option("--judge-members", e.judge_members, "Professional judges among the members");
  cmd->add_option("--presiding-id", e.presiding_id, "Presiding judge id (default: first in pool)");
}

void add_dataset_options(CLI::App* cmd, ab::DatasetConfig& d) {
  cmd->add_option("--max-fact-chars", d.max_fact_chars, "Fact truncation in characters");
  cmd->add_option("--max-term-months", d.max_term_months, "Largest acceptable gold term");
  cmd->add_flag("!--skip-bad-records", d.reject_missing_fields, "Skip malformed records instead of failing");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collegial-bench sentencing prediction and evaluation"};
  app.set_config("--config", "", "key=value / INI configuration file; sections are subcommand names");
  app.require_subcommand(1);
  app.add_flag_callback("-v,--verbose", [] { spdlog::set_level(spdlog::level::debug); }, "Debug logging");

  int rc = 0;

  ab::run::RunConfig rc_run;
  std::optional<int> max_tokens;
  auto* run = app.add_subcommand("run", "Run a method over a dataset into a run directory");
  run->add_option("--dataset", rc_run.dataset, "Case file (JSONL)")->required();
  run->add_option("--out", rc_run.output_dir, "Run directory")->required();
  run->add_option("--method", rc_run.method, "standard | cot | ls | bench")
      ->check(CLI::IsMember({"standard", "cot", "ls", "bench"}));
  run->add_option("--backend", rc_run.backend_kind, "openai | scripted")->check(CLI::IsMember({"openai", "scripted"}));
  run->add_option("--script", rc_run.script_path, "Scripted responses (JSON array)");
  run->add_option("--pool", rc_run.pool_path, "Agent pool (JSONL)");
  run->add_option("--templates", rc_run.templates_dir, "Directory of <name>.txt template overrides");
  run->add_option("--model", rc_run.engine.model, "Model name");
  run->add_option("--temperature", rc_run.engine.temperature, "Sampling temperature");
  run->add_option("--top-p", rc_run.engine.top_p, "Nucleus sampling");
  run->add_option("--max-tokens", max_tokens, "Completion token cap");
  run->add_option("--base-url", rc_run.backend.base_url, "Chat completions base URL");
  run->add_option("--api-key-env", rc_run.backend.api_key_env_var, "Environment variable holding the API key");
  run->add_option("--max-retries", rc_run.backend.max_retries, "Retries on transient HTTP errors");
  run->add_option("--backoff-ms", rc_run.backend.initial_backoff_ms, "Initial retry backoff");
  run->add_option("--timeout-ms", rc_run.backend.request_timeout_ms, "Per-request timeout");
  run->add_option("--max-in-flight", rc_run.backend.max_in_flight, "Concurrent requests");
  run->add_option("--workers", rc_run.workers, "Cases processed concurrently");
  run->add_option("--limit", rc_run.limit, "Process only the first N cases");
  run->add_option("--max-diff", rc_run.max_diff, "Distance cap in months");
  run->add_option("--max-failure-pct", rc_run.max_failure_pct, "Exit nonzero above this failed-case share");
  run->add_option("--history-budget", rc_run.history_budget_chars, "Discussion history budget in characters");
  run->add_flag("--memory", rc_run.engine.memory_enabled, "Recall precedents from earlier cases");
  run->add_option("--recall-k", rc_run.engine.recall_k, "Precedents recalled per case");
  add_engine_options(run, rc_run.engine);
  add_dataset_options(run, rc_run.dataset_config);
  run->callback([&] {
    rc_run.engine.max_tokens = max_tokens;
    rc = ab::run::cmd_run(rc_run);
  });

  std::string score_dir, score_annotations;
  std::optional<int> score_max_diff;
  auto* score = app.add_subcommand("score", "Recompute score.json for a run directory");
  score->add_option("run_dir", score_dir, "Run directory")->required();
  score->add_option("--max-diff", score_max_diff, "Override the distance cap");
  score->add_option("--annotations", score_annotations, "Quality annotations CSV");
  score->callback([&] { rc = ab::run::cmd_score(score_dir, score_max_diff, score_annotations); });

  std::string kappa_path;
  auto* kappa = app.add_subcommand("kappa", "Inter-rater agreement and quality rates");
  kappa->add_option("annotations", kappa_path, "Annotations CSV (case_id,rater_id,legality,logicality,morality)")
      ->required();
  kappa->callback([&] { rc = ab::run::cmd_kappa(kappa_path); });

  std::vector<std::string> report_dirs;
  std::string report_format = "table";
  auto* report = app.add_subcommand("report", "Results table across run directories");
  report->add_option("run_dirs", report_dirs, "Scored run directories")->required();
  report->add_option("--format", report_format, "table | csv")->check(CLI::IsMember({"table", "csv"}));
  report->callback([&] {
    rc = ab::run::cmd_report(report_dirs, report_format == "csv" ? ab::ReportFormat::kDelimited
                                                                  : ab::ReportFormat::kTable);
  });

  std::string replay_script, replay_case, replay_pool, replay_case_id;
  bool replay_json = false;
  ab::EngineConfig replay_engine;
  auto* replay = app.add_subcommand("replay", "Run one case against scripted responses and print the transcript");
  replay->add_option("--script", replay_script, "Scripted responses")->required();
  replay->add_option("--case", replay_case, "Case file (JSONL)")->required();
  replay->add_option("--pool", replay_pool, "Agent pool (JSONL)")->required();
  replay->add_option("--case-id", replay_case_id, "Case to replay (default: first)");
  replay->add_flag("--json", replay_json, "Print the transcript as JSON");
  add_engine_options(replay, replay_engine);
  replay->callback([&] {
    rc = ab::run::cmd_replay(replay_script, replay_case, replay_pool, replay_engine, replay_case_id, replay_json);
  });

  std::string validate_path;
  ab::DatasetConfig validate_cfg;
  auto* validate = app.add_subcommand("validate", "Check a case file and print per-line diagnostics");
  validate->add_option("dataset", validate_path, "Case file (JSONL)")->required();
  add_dataset_options(validate, validate_cfg);
  validate->callback([&] { rc = ab::run::cmd_validate(validate_path, validate_cfg); });

  std::string parse_mode = "term";
  auto* parse = app.add_subcommand("parse", "Parse text from stdin");
  parse->add_option("--as", parse_mode, "term | opinion | consensus")
      ->check(CLI::IsMember({"term", "opinion", "consensus"}));
  parse->callback([&] {
    auto mode = parse_mode == "opinion"     ? ab::run::ParseMode::kOpinion
                : parse_mode == "consensus" ? ab::run::ParseMode::kConsensus
                                            : ab::run::ParseMode::kTerm;
    rc = ab::run::cmd_parse(std::cin, mode);
  });

  std::string import_in, import_out;
  ab::DatasetConfig import_cfg;
  auto* import = app.add_subcommand("import", "Convert LawBench-style question/answer records to the case format");
  import->add_option("input", import_in, "JSON array or JSONL")->required();
  import->add_option("output", import_out, "Output JSONL")->required();
  add_dataset_options(import, import_cfg);
  import->callback([&] { rc = ab::run::cmd_import(import_in, import_out, import_cfg); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : ab::run::kExitConfig;
  }
  return rc;
}
