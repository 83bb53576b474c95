#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace agentsbench;

namespace {

std::string op(int months, const std::string& why = "weighing the facts") {
  return "Sentence Term: " + std::to_string(months) + " months\nReason: " + why;
}
const std::string kStmt = "I have considered the arguments.";
const std::string kNo = "Conclusion: No\n\nMain Points of Disagreement: the terms are still apart.";
const std::string kYes = "Conclusion: Yes\n\nThe bench agrees.";
const std::string kJunk = "I would rather not say.";
const std::string kSummary = "Summary of Collegial Panel Discussion\n\nDone.";

struct Run {
  std::shared_ptr<ScriptedBackend> backend;
  std::optional<Transcript> transcript;
  std::optional<CaseError> error;
};

Run deliberate(std::vector<std::string> script, EngineConfig cfg = {}, std::vector<AgentProfile> pool = abtest::worked_pool(),
        Case c = abtest::worked_case(), PrecedentMemory* memory = nullptr) {
  Run r;
  r.backend = make_scripted_backend(std::move(script));
  BenchEngine engine(*r.backend, PromptTemplateSet::defaults(), cfg, memory);
  try {
    r.transcript = engine.run_case(c, pool);
  } catch (const CaseError& e) {
    r.error = e;
  }
  return r;
}

std::vector<AgentProfile> lay_pool(int lay) {
  std::vector<AgentProfile> pool = {{"P", AgentRole::kPresidingJudge, "", ""}};
  for (int i = 0; i < lay; ++i) pool.push_back({"L" + std::to_string(i), AgentRole::kLayJudge, "", ""});
  return pool;
}

void expect_within_bounds(const Transcript& t, const EngineConfig& cfg) {
  EXPECT_LE(t.calls.primary, cfg.primary_call_bound());
  EXPECT_LE(t.calls.retry, cfg.retry_call_bound());
}

}  // namespace

TEST(Engine, WorkedCaseReplay) {
  auto r = deliberate(abtest::worked_script());
  ASSERT_TRUE(r.transcript) << r.error->what();
  const auto& t = *r.transcript;
  EXPECT_EQ(t.initial.terms(), (std::vector<int>{60, 48, 54}));
  EXPECT_EQ(t.bench.presiding.id, "Zhou");
  ASSERT_EQ(t.rounds.size(), 2u);
  EXPECT_FALSE(t.rounds[0].verdict.consensus);
  EXPECT_NE(t.rounds[0].verdict.summary.find("significant differences"), std::string::npos);
  ASSERT_TRUE(t.rounds[0].updated_opinions);
  EXPECT_EQ(t.rounds[0].updated_opinions->terms(), (std::vector<int>{54, 54, 54}));
  EXPECT_TRUE(t.rounds[1].verdict.consensus);
  EXPECT_FALSE(t.rounds[1].updated_opinions);
  ASSERT_TRUE(t.final);
  EXPECT_EQ(t.final->term_months, 54);
  EXPECT_TRUE(t.final->consensus_reached);
  EXPECT_EQ(t.final->rounds_used, 2);
  EXPECT_FALSE(t.final->fallback);
  EXPECT_EQ(t.calls.primary, 15);
  EXPECT_EQ(t.calls.retry, 0);
  EXPECT_EQ(r.backend->remaining(), 0u);
  EXPECT_NE(t.closing_summary.find("Summary of Collegial Panel Discussion"), std::string::npos);
  EXPECT_NEAR(performance_score(t.final->term_months, 58, 300), 0.7179942496686773, 1e-12);
  EXPECT_FALSE(abtest::request_log_leaks(r.backend->requests(), 58));
}

TEST(Engine, StatementsPresidingFirstInBenchOrder) {
  auto r = deliberate(abtest::worked_script());
  ASSERT_TRUE(r.transcript);
  for (std::size_t i = 0; i < r.transcript->rounds.size(); ++i) {
    const auto& round = r.transcript->rounds[i];
    EXPECT_EQ(round.index, static_cast<int>(i) + 1);
    ASSERT_EQ(round.statements.size(), 3u);
    EXPECT_EQ(round.statements[0].agent_id, "Zhou");
    EXPECT_EQ(round.statements[1].agent_id, "Zhang");
    EXPECT_EQ(round.statements[2].agent_id, "Su");
  }
}

TEST(Engine, DeterministicTranscript) {
  auto a = deliberate(abtest::worked_script());
  auto b = deliberate(abtest::worked_script());
  ASSERT_TRUE(a.transcript && b.transcript);
  EXPECT_EQ(to_json(*a.transcript).dump(), to_json(*b.transcript).dump());
}

TEST(Engine, EarlyStopUnanimousRatifiesWithoutSynthesis) {
  auto r = deliberate({op(54), op(54), op(54), kStmt, kStmt, kStmt, kYes, kSummary});
  ASSERT_TRUE(r.transcript);
  EXPECT_EQ(r.transcript->rounds.size(), 1u);
  EXPECT_EQ(r.backend->call_count(), 8u);
  EXPECT_EQ(r.transcript->final->term_months, 54);
  EXPECT_TRUE(r.transcript->final->consensus_reached);
  EXPECT_EQ(r.transcript->final->justification, "The bench agrees.");
}

TEST(Engine, YesVerdictWithDifferingTermsUsesSynthesis) {
  auto r = deliberate({op(60), op(48), op(54), kStmt, kStmt, kStmt, kYes, op(52, "resolved"), kSummary});
  ASSERT_TRUE(r.transcript);
  EXPECT_EQ(r.backend->call_count(), 9u);
  EXPECT_EQ(r.transcript->final->term_months, 52);
  EXPECT_TRUE(r.transcript->final->consensus_reached);
  EXPECT_EQ(r.transcript->final->justification, "resolved");
}

TEST(Engine, MaxRoundsThenSynthesis) {
  std::vector<std::string> script = {op(60), op(48), op(54)};
  for (int round = 0; round < 3; ++round) {
    for (auto s : {kStmt, kStmt, kStmt, kNo, op(60), op(48), op(54)}) script.push_back(s);
  }
  script.push_back("刑期：50个月\n理由：综合全部讨论。");
  script.push_back(kSummary);
  auto r = deliberate(script);
  ASSERT_TRUE(r.transcript);
  EXPECT_EQ(r.transcript->rounds.size(), 3u);
  EXPECT_EQ(r.transcript->final->term_months, 50);
  EXPECT_FALSE(r.transcript->final->consensus_reached);
  EXPECT_EQ(r.transcript->final->rounds_used, 3);
  EXPECT_EQ(r.backend->remaining(), 0u);
  expect_within_bounds(*r.transcript, {});
  EXPECT_EQ(r.transcript->calls.primary, EngineConfig{}.primary_call_bound());
}

TEST(Engine, SynthesisUnparseableFallsBackToLowerMedian) {
  EngineConfig cfg;
  cfg.max_rounds = 1;
  auto r = deliberate({op(48), op(60), op(54), kStmt, kStmt, kStmt, kNo, op(48), op(60), op(54), kJunk, kJunk, kSummary}, cfg);
  ASSERT_TRUE(r.transcript);
  EXPECT_EQ(r.transcript->final->term_months, 54);
  EXPECT_TRUE(r.transcript->final->fallback);
  EXPECT_EQ(r.transcript->calls.retry, 1);
  EXPECT_EQ(lower_median({48, 60}), 48);
}

TEST(Engine, MemberAbstainsAfterRetries) {
  auto r = deliberate({op(60), op(48), kJunk, kJunk, kStmt, kStmt, kYes, op(55), kSummary});
  ASSERT_TRUE(r.transcript) << r.error->what();
  const auto& t = *r.transcript;
  EXPECT_EQ(t.initial.abstained, (std::vector<std::string>{"Su"}));
  EXPECT_EQ(t.initial.opinions.size(), 2u);
  EXPECT_EQ(t.rounds[0].statements.size(), 2u);
  EXPECT_EQ(t.final->term_months, 55);
  EXPECT_EQ(t.calls.retry, 1);
  // The corrective re-ask carries the bad reply and a reminder.
  auto second_ask = r.backend->requests().at(3);
  EXPECT_EQ(second_ask.messages.size(), 4u);
  EXPECT_EQ(second_ask.messages[2].content, kJunk);
}

TEST(Engine, PresidingUnparseableFailsCase) {
  auto r = deliberate({kJunk, kJunk});
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->transcript().status, "failed");
  EXPECT_FALSE(r.error->transcript().final);
  EXPECT_EQ(r.error->transcript().bench.presiding.id, "Zhou");
}

TEST(Engine, AllMembersAbstainFailsCase) {
  auto r = deliberate({op(60), kJunk, kJunk, kJunk, kJunk});
  ASSERT_TRUE(r.error);
  EXPECT_NE(std::string(r.error->what()).find("abstained"), std::string::npos);
}

TEST(Engine, UpdateUnparseableCarriesForward) {
  EngineConfig cfg;
  cfg.max_rounds = 1;
  auto r = deliberate({op(60), op(48), op(54), kStmt, kStmt, kStmt, kNo, op(56), kJunk, kJunk, op(54), op(55), kSummary}, cfg);
  ASSERT_TRUE(r.transcript) << r.error->what();
  const auto& updated = *r.transcript->rounds[0].updated_opinions;
  ASSERT_EQ(updated.opinions.size(), 3u);
  EXPECT_EQ(updated.opinions[1].agent_id, "Zhang");
  EXPECT_EQ(updated.opinions[1].term_months, 48);
  EXPECT_EQ(updated.opinions[1].rationale, "weighing the facts");
  EXPECT_TRUE(updated.opinions[1].carried_forward);
  EXPECT_EQ(updated.opinions[1].round, 1);
  EXPECT_FALSE(updated.opinions[0].carried_forward);
  EXPECT_EQ(r.transcript->final->term_months, 55);
}

TEST(Engine, UnreadableVerdictIsNoConsensus) {
  EngineConfig cfg;
  cfg.max_rounds = 1;
  auto r = deliberate({op(54), op(54), op(54), kStmt, kStmt, kStmt, kJunk, "Conclusion: Yes/No", op(54), op(54), op(54),
                op(54), kSummary},
               cfg);
  ASSERT_TRUE(r.transcript) << r.error->what();
  const auto& round = r.transcript->rounds[0];
  EXPECT_FALSE(round.verdict.consensus);
  EXPECT_TRUE(round.verdict_fallback);
  EXPECT_TRUE(round.updated_opinions);
  EXPECT_FALSE(r.transcript->final->consensus_reached);
}

TEST(Engine, BackendFailureKeepsPartialRound) {
  auto r = deliberate({op(60), op(48), op(54), kStmt, kStmt});
  ASSERT_TRUE(r.error);
  const auto& t = r.error->transcript();
  EXPECT_EQ(t.status, "failed");
  EXPECT_EQ(t.error, "script exhausted");
  EXPECT_EQ(t.initial.opinions.size(), 3u);
  ASSERT_TRUE(t.partial_round);
  EXPECT_EQ(t.partial_round->statements.size(), 2u);
  EXPECT_TRUE(to_json(t).contains("partial_round"));
}

TEST(Engine, BenchOfOne) {
  EngineConfig cfg;
  cfg.bench_size = 1;
  auto r = deliberate({op(30), kStmt, kYes, kSummary}, cfg, lay_pool(0));
  ASSERT_TRUE(r.transcript) << r.error->what();
  EXPECT_TRUE(r.transcript->bench.members.empty());
  EXPECT_EQ(r.transcript->initial.opinions.size(), 1u);
  EXPECT_EQ(r.transcript->final->term_months, 30);
}

TEST(Engine, BaselineExtraction) {
  auto check = [](const std::string& reply, std::optional<int> want, BaselineMethod m) {
    auto b = make_scripted_backend({reply});
    BenchEngine engine(*b, PromptTemplateSet::defaults(), {});
    std::string raw;
    EXPECT_EQ(engine.run_baseline_case(abtest::simple_case(), m, &raw), want) << reply;
    EXPECT_EQ(raw, reply);
    EXPECT_EQ(b->call_count(), 1u);
    EXPECT_EQ(b->requests()[0].temperature, 0.0);
    EXPECT_EQ(b->requests()[0].top_p, 1.0);
  };
  check("判处有期徒刑五年", 60, BaselineMethod::kStandard);
  check("首先分析犯罪情节……所以刑期为48个月", 48, BaselineMethod::kCot);
  check("抱歉，我无法给出刑期建议。", std::nullopt, BaselineMethod::kLs);
}

TEST(Selection, DeterministicOverRepeatedCalls) {
  auto pool = lay_pool(5);
  EngineConfig cfg;
  auto first = select_bench(pool, cfg, 42);
  ASSERT_EQ(first.members.size(), 2u);
  for (int i = 0; i < 100; ++i) {
    auto again = select_bench(pool, cfg, 42);
    ASSERT_EQ(again.members, first.members);
    EXPECT_EQ(again.presiding, first.presiding);
  }
}

TEST(Selection, SeedsVaryTheDraw) {
  auto pool = lay_pool(5);
  std::set<std::vector<std::string>> seen;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<std::string> ids;
    for (const auto& m : select_bench(pool, {}, seed).members) ids.push_back(m.id);
    seen.insert(ids);
  }
  EXPECT_GT(seen.size(), 5u);
}

TEST(Selection, CompositionAndErrors) {
  auto pool = abtest::data_path("agent_pool.jsonl");
  auto profiles = load_agent_pool(pool.string());
  EngineConfig cfg;
  cfg.bench_size = 5;
  cfg.judge_members = 2;
  auto bench = select_bench(profiles, cfg, 7);
  EXPECT_EQ(bench.presiding.id, "Zhou");
  ASSERT_EQ(bench.members.size(), 4u);
  EXPECT_EQ(bench.members[0].role, AgentRole::kJudge);
  EXPECT_EQ(bench.members[1].role, AgentRole::kJudge);
  EXPECT_EQ(bench.members[2].role, AgentRole::kLayJudge);
  std::set<std::string> ids;
  for (const auto& m : bench.members) ids.insert(m.id);
  EXPECT_EQ(ids.size(), 4u);

  cfg.presiding_id = "Wang";
  EXPECT_EQ(select_bench(profiles, cfg, 7).presiding.id, "Wang");
  cfg.presiding_id = "Nobody";
  EXPECT_THROW(select_bench(profiles, cfg, 7), BenchError);

  EngineConfig big;
  big.bench_size = 7;
  EXPECT_THROW(select_bench(lay_pool(3), big, 1), BenchError);
  EXPECT_THROW(select_bench({{"L", AgentRole::kLayJudge, "", ""}, {"M", AgentRole::kLayJudge, "", ""}}, {}, 1),
               BenchError);
  auto dup = lay_pool(3);
  dup.push_back(dup[1]);
  EXPECT_THROW(select_bench(dup, {}, 1), BenchError);
}

TEST(Selection, LayShortageToppedUpWithJudges) {
  std::vector<AgentProfile> pool = {{"P", AgentRole::kPresidingJudge, "", ""},
                                    {"J1", AgentRole::kJudge, "", ""},
                                    {"J2", AgentRole::kJudge, "", ""},
                                    {"L1", AgentRole::kLayJudge, "", ""}};
  EngineConfig cfg;
  cfg.bench_size = 4;
  auto bench = select_bench(pool, cfg, 3);
  ASSERT_EQ(bench.members.size(), 3u);
  EXPECT_EQ(bench.members[2].id, "L1");
}

TEST(Config, Validation) {
  EngineConfig cfg;
  cfg.bench_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.max_rounds = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  EXPECT_EQ(cfg.primary_call_bound(), 3 + 3 * 7 + 2);
  EXPECT_EQ(cfg.retry_call_bound(), 1 * (3 + 3 * 4 + 1));
}

TEST(Memory, RecallRules) {
  PrecedentMemory m;
  auto c = abtest::simple_case();
  EXPECT_TRUE(recall_similar(m, c, 3).empty());
  remember_case(m, c, {30, "", true, 1, false});
  auto one = recall_similar(m, c, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].term_months, 30);
  EXPECT_TRUE(recall_similar(m, c, 0).empty());
  remember_case(m, c, {40, "", true, 1, false});
  auto two = recall_similar(m, c, 5);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].term_months, 40);
  auto other = c;
  other.charge = "诈骗罪";
  EXPECT_TRUE(recall_similar(m, other, 5).empty());
  EXPECT_THROW(recall_similar(m, c, -1), std::invalid_argument);
}

TEST(Memory, ConcurrentAppendsAndReads) {
  PrecedentMemory m;
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&m, t] {
        for (int i = 0; i < 200; ++i) {
          m.remember("charge" + std::to_string(t % 2), {"x", i});
          m.recall("charge0", 3);
        }
      });
    }
  }
  EXPECT_EQ(m.size(), 1600u);
}

TEST(Memory, EngineStoresAndRecalls) {
  EngineConfig cfg;
  cfg.memory_enabled = true;
  PrecedentMemory memory;
  auto first = deliberate({op(54), op(54), op(54), kStmt, kStmt, kStmt, kYes, kSummary}, cfg, abtest::worked_pool(),
                   abtest::simple_case("m1", 36), &memory);
  ASSERT_TRUE(first.transcript);
  EXPECT_EQ(memory.size(), 1u);
  auto second = deliberate({op(40), op(40), op(40), kStmt, kStmt, kStmt, kYes, kSummary}, cfg, abtest::worked_pool(),
                    abtest::simple_case("m2", 36), &memory);
  ASSERT_TRUE(second.transcript);
  auto first_ask = second.backend->requests().at(0).messages.back().content;
  EXPECT_NE(first_ask.find("-> 54 months"), std::string::npos);
  EXPECT_EQ(memory.size(), 2u);
}
