#include <gtest/gtest.h>

#include <sys/wait.h>

#include "support.hpp"

using namespace agentsbench;
using abtest::TempDir;
namespace fs = std::filesystem;

namespace {

struct Shell {
  int rc;
  std::string out;
};

// Runs the built CLI through the shell, capturing stdout.
Shell cli(const std::string& args, const TempDir& dir) {
  auto out = dir / "stdout.txt";
  auto cmd = std::string(AB_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" + (dir / "stderr.txt").string() + "'";
  int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, run::read_file(out)};
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path write_cases(const TempDir& dir, const std::vector<Case>& cases, const std::string& name = "cases.jsonl") {
  auto p = dir / name;
  abtest::write_text(p, serialize_cases(cases));
  return p;
}

fs::path write_script(const TempDir& dir, const std::vector<std::string>& script, const std::string& name) {
  auto p = dir / name;
  abtest::write_text(p, nlohmann::json(script).dump());
  return p;
}

std::vector<std::string> unanimous_case(int months) {
  auto op = "Sentence Term: " + std::to_string(months) + " months\nReason: settled";
  return {op, op, op, "s", "s", "s", "Conclusion: Yes\nagreed", "Summary of Collegial Panel Discussion"};
}

run::RunConfig scripted_config(const TempDir& dir, const fs::path& dataset, const fs::path& script,
                               const std::string& method, const std::string& out) {
  run::RunConfig c;
  c.dataset = dataset.string();
  c.method = method;
  c.backend_kind = "scripted";
  c.script_path = script.string();
  c.pool_path = abtest::data_path("worked_pool.jsonl").string();
  c.output_dir = (dir / out).string();
  return c;
}

std::vector<Case> five_cases() {
  std::vector<Case> cs;
  for (int i = 0; i < 5; ++i) cs.push_back(abtest::simple_case("case/" + std::to_string(i), 30 + i));
  return cs;
}

}  // namespace

TEST(RunCommand, BenchLimitWritesCaseFilesAndSummary) {
  TempDir dir;
  auto dataset = write_cases(dir, five_cases());
  std::vector<std::string> script;
  for (int m : {30, 40, 32}) {
    auto one = unanimous_case(m);
    script.insert(script.end(), one.begin(), one.end());
  }
  auto cfg = scripted_config(dir, dataset, write_script(dir, script, "s.json"), "bench", "runA");
  cfg.limit = 3;
  std::ostringstream out;
  run::RunStats stats;
  ASSERT_EQ(run::cmd_run(cfg, nullptr, &stats, out), run::kExitOk) << out.str();
  EXPECT_EQ(stats.processed, 3);
  EXPECT_EQ(stats.failed, 0);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "runA" / "cases")) files.push_back(e.path());
  ASSERT_EQ(files.size(), 3u);
  for (const auto& f : files) EXPECT_EQ(f.filename().string().find('/'), std::string::npos);
  auto rec = nlohmann::json::parse(run::read_file(dir / "runA" / "cases" / run::case_file_name("case/1")));
  EXPECT_EQ(rec["status"], "ok");
  EXPECT_EQ(rec["predicted_months"], 40);
  EXPECT_EQ(rec["gold_months"], 31);
  EXPECT_EQ(rec["transcript"]["final"]["term_months"], 40);

  auto manifest = nlohmann::json::parse(run::read_file(dir / "runA" / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 42);
  EXPECT_TRUE(manifest.contains("template_hashes"));
  EXPECT_TRUE(manifest.contains("script_hash"));
  auto score = nlohmann::json::parse(run::read_file(dir / "runA" / "score.json"));
  EXPECT_EQ(score["summary"]["case_count"], 3);
  EXPECT_NE(out.str().find("processed 3, skipped 0, failed 0"), std::string::npos);

  // Resuming does not touch the backend for completed cases.
  auto idle = make_scripted_backend({"unused"});
  ASSERT_EQ(run::cmd_run(cfg, idle, &stats, out), run::kExitOk);
  EXPECT_EQ(idle->call_count(), 0u);
  EXPECT_EQ(stats.skipped, 3);
  EXPECT_EQ(stats.processed, 0);
}

TEST(RunCommand, ManifestMismatchIsConfigError) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case()});
  auto cfg = scripted_config(dir, dataset, write_script(dir, {"刑期：36个月"}, "s.json"), "standard", "run");
  std::ostringstream out;
  ASSERT_EQ(run::cmd_run(cfg, nullptr, nullptr, out), run::kExitOk);
  cfg.engine.seed = 7;
  EXPECT_EQ(run::cmd_run(cfg, nullptr, nullptr, out), run::kExitConfig);
  cfg.engine.seed = 42;
  cfg.method = "cot";
  EXPECT_EQ(run::cmd_run(cfg, nullptr, nullptr, out), run::kExitConfig);
}

TEST(RunCommand, InvalidConfigurations) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case()});
  auto cfg = scripted_config(dir, dataset, dir / "s.json", "bench", "run");
  cfg.method = "debate";
  EXPECT_EQ(run::cmd_run(cfg), run::kExitConfig);
  cfg.method = "bench";
  cfg.pool_path.clear();
  EXPECT_EQ(run::cmd_run(cfg), run::kExitConfig);
  cfg = scripted_config(dir, dataset, dir / "missing.json", "standard", "run");
  EXPECT_EQ(run::cmd_run(cfg), run::kExitConfig);
  cfg = scripted_config(dir, dir / "none.jsonl", dir / "s.json", "standard", "run");
  EXPECT_EQ(run::cmd_run(cfg), run::kExitConfig);
}

TEST(RunCommand, CotRequestCarriesTrigger) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case()});
  auto cfg = scripted_config(dir, dataset, dir / "unused.json", "cot", "run");
  abtest::write_text(dir / "unused.json", "[\"x\"]");
  auto backend = make_scripted_backend({"思考……所以刑期为48个月"});
  std::ostringstream out;
  ASSERT_EQ(run::cmd_run(cfg, backend, nullptr, out), run::kExitOk);
  ASSERT_EQ(backend->call_count(), 1u);
  EXPECT_NE(backend->requests()[0].messages.back().content.find("Let's think step by step"), std::string::npos);
  auto rec = nlohmann::json::parse(run::read_file(dir / "run" / "cases" / run::case_file_name("c1")));
  EXPECT_EQ(rec["predicted_months"], 48);
  EXPECT_EQ(rec["raw_output"], "思考……所以刑期为48个月");
}

TEST(RunCommand, TooManyFailures) {
  TempDir dir;
  auto dataset = write_cases(dir, five_cases());
  auto cfg = scripted_config(dir, dataset, write_script(dir, unanimous_case(30), "s.json"), "bench", "run");
  std::ostringstream out;
  run::RunStats stats;
  EXPECT_EQ(run::cmd_run(cfg, nullptr, &stats, out), run::kExitTooManyFailures);
  EXPECT_EQ(stats.processed, 5);
  EXPECT_EQ(stats.failed, 4);
  auto rec = nlohmann::json::parse(run::read_file(dir / "run" / "cases" / run::case_file_name("case/1")));
  EXPECT_EQ(rec["status"], "failed");
  EXPECT_EQ(rec["transcript"]["status"], "failed");
  EXPECT_TRUE(rec["predicted_months"].is_null());
  EXPECT_NE(out.str().find("4 unparsed"), std::string::npos);
}

TEST(ScoreCommand, ExactPlusMissingIsFifty) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case("a", 36), abtest::simple_case("b", 12)});
  auto cfg = scripted_config(dir, dataset, write_script(dir, {"刑期：36个月", "我无法判断。"}, "s.json"), "standard",
                             "run");
  std::ostringstream run_out;
  ASSERT_EQ(run::cmd_run(cfg, nullptr, nullptr, run_out), run::kExitOk);
  std::ostringstream out;
  EXPECT_EQ(run::cmd_score((dir / "run").string(), std::nullopt, "", out), run::kExitOk);
  EXPECT_EQ(out.str(), "50.00\n");
  auto score = run::score_run_dir(dir / "run");
  EXPECT_EQ(score.summary.unparsed_count, 1);
  EXPECT_EQ(score.summary.method, "standard");

  // Corrupt record: scoring refuses rather than silently dropping it.
  abtest::write_text(dir / "run" / "cases" / "zz.json", "{broken");
  EXPECT_EQ(run::cmd_score((dir / "run").string(), std::nullopt, "", out), run::kExitFailure);
}

TEST(ScoreCommand, AnnotationsAddQualityRates) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case("a", 36)});
  auto cfg = scripted_config(dir, dataset, write_script(dir, {"刑期：36个月"}, "s.json"), "ls", "run");
  std::ostringstream out;
  ASSERT_EQ(run::cmd_run(cfg, nullptr, nullptr, out), run::kExitOk);
  abtest::write_text(dir / "ann.csv",
                     "case_id,rater_id,legality,logicality,morality\na,r1,1,0,1\na,r2,1,0,0\na,r3,1,1,0\n");
  ASSERT_EQ(run::cmd_score((dir / "run").string(), std::nullopt, (dir / "ann.csv").string(), out), run::kExitOk);
  auto s = run::score_run_dir(dir / "run", std::nullopt, nullptr);
  auto j = nlohmann::json::parse(run::read_file(dir / "run" / "score.json"));
  EXPECT_EQ(j["summary"]["legality_pct"], 100.0);
  EXPECT_EQ(j["summary"]["logicality_pct"], 0.0);
  EXPECT_EQ(j["summary"]["morality_pct"], 0.0);
  EXPECT_FALSE(s.summary.legality_pct);
}

TEST(ReportCommand, TwoRunsDeterministicOrder) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case("a", 36)});
  std::ostringstream sink;
  auto bench_script = write_script(dir, unanimous_case(36), "b.json");
  ASSERT_EQ(run::cmd_run(scripted_config(dir, dataset, bench_script, "bench", "bench"), nullptr, nullptr, sink), 0);
  auto std_script = write_script(dir, {"判处有期徒刑三年"}, "s.json");
  ASSERT_EQ(run::cmd_run(scripted_config(dir, dataset, std_script, "standard", "std"), nullptr, nullptr, sink), 0);

  std::ostringstream a;
  std::ostringstream b;
  ASSERT_EQ(run::cmd_report({(dir / "bench").string(), (dir / "std").string()}, ReportFormat::kDelimited, a), 0);
  ASSERT_EQ(run::cmd_report({(dir / "std").string(), (dir / "bench").string()}, ReportFormat::kDelimited, b), 0);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(),
            "Model,Method,Performance (%),Legality (%),Logicality (%),Morality (%),Cases,Unparsed\n"
            "gpt-4,Standard Prompt,100.00,,,,1,0\n"
            "gpt-4,AgentsBench,100.00,,,,1,0\n");
  EXPECT_EQ(run::cmd_report({(dir / "nowhere").string()}, ReportFormat::kTable, a), run::kExitFailure);
}

TEST(Binary, ReplayWorkedCase) {
  TempDir dir;
  auto r = cli("replay --script " + quoted(abtest::data_path("worked_script.json")) + " --case " +
                   quoted(abtest::data_path("worked_case.jsonl")) + " --pool " +
                   quoted(abtest::data_path("worked_pool.jsonl")),
               dir);
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("Final: 54 months (consensus: yes, rounds: 2)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Consensus: No\n    Main Points of Disagreement: The members show significant differences"), std::string::npos);

  auto j = cli("replay --json --script " + quoted(abtest::data_path("worked_script.json")) + " --case " +
                   quoted(abtest::data_path("worked_case.jsonl")) + " --pool " +
                   quoted(abtest::data_path("worked_pool.jsonl")),
               dir);
  ASSERT_EQ(j.rc, 0);
  EXPECT_EQ(nlohmann::json::parse(j.out)["final"]["term_months"], 54);
}

TEST(Binary, ParseModes) {
  TempDir dir;
  abtest::write_text(dir / "in.txt", "判处有期徒刑五年");
  auto r = cli("parse < " + quoted(dir / "in.txt"), dir);
  EXPECT_EQ(r.rc, 0);
  EXPECT_EQ(r.out, "60\n");
  abtest::write_text(dir / "in.txt", "no term here");
  r = cli("parse < " + quoted(dir / "in.txt"), dir);
  EXPECT_EQ(r.rc, 1);
  EXPECT_EQ(r.out, "none\n");
  abtest::write_text(dir / "in.txt", "Conclusion: No\nMain Points of Disagreement: far apart");
  r = cli("parse --as consensus < " + quoted(dir / "in.txt"), dir);
  EXPECT_EQ(r.rc, 0);
  EXPECT_FALSE(nlohmann::json::parse(r.out)["consensus"].get<bool>());
  abtest::write_text(dir / "in.txt", "刑期：48个月\n理由：认罪");
  r = cli("parse --as opinion < " + quoted(dir / "in.txt"), dir);
  EXPECT_EQ(nlohmann::json::parse(r.out)["term_months"], 48);
}

TEST(Binary, ValidateAndImport) {
  TempDir dir;
  auto good = write_cases(dir, {abtest::simple_case("a", 1)});
  auto r = cli("validate " + quoted(good), dir);
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("1 records, 0 invalid"), std::string::npos) << r.out;
  abtest::write_text(dir / "bad.jsonl", run::read_file(good) + "{oops\n");
  r = cli("validate " + quoted(dir / "bad.jsonl"), dir);
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.out.find("line 2"), std::string::npos);

  abtest::write_text(dir / "lb.jsonl",
                     R"({"question":"事实。\n罪名：盗窃\n法条：第二百六十四条","answer":"刑期：7个月"})" "\n");
  r = cli("import " + quoted(dir / "lb.jsonl") + " " + quoted(dir / "out.jsonl"), dir);
  ASSERT_EQ(r.rc, 0);
  auto cases = load_cases((dir / "out.jsonl").string(), {});
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].gold_term_months, 7);
}

TEST(Binary, RunFromConfigFileThenReport) {
  TempDir dir;
  auto dataset = write_cases(dir, {abtest::simple_case("a", 36)});
  auto script = write_script(dir, {"刑期：36个月"}, "s.json");
  abtest::write_text(dir / "run.toml", "[run]\nmethod = \"standard\"\nbackend = \"scripted\"\nscript = \"" +
                                           script.string() + "\"\ndataset = \"" + dataset.string() + "\"\nout = \"" +
                                           (dir / "r").string() + "\"\n");
  auto r = cli("--config " + quoted(dir / "run.toml") + " run", dir);
  ASSERT_EQ(r.rc, 0) << run::read_file(dir / "stderr.txt");
  EXPECT_NE(r.out.find("performance 100.00% over 1 cases"), std::string::npos) << r.out;
  r = cli("report --format csv " + quoted(dir / "r"), dir);
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("gpt-4,Standard Prompt,100.00"), std::string::npos) << r.out;
  r = cli("run --dataset " + quoted(dataset) + " --out " + quoted(dir / "r2") + " --method nope", dir);
  EXPECT_EQ(r.rc, 2);
  r = cli("frobnicate", dir);
  EXPECT_NE(r.rc, 0);
}
