#pragma once

// Per-case deliberation pipeline:
//   select_bench -> independent_sentencing -> run_round (1..max_rounds,
//   stopping at the first consensus verdict) -> synthesize_final
//
// All calls within one case are issued sequentially. A BenchEngine holds no
// per-case state, so one engine may serve many concurrent case workers.
//
// Call budget for a bench of n agents and R = max_rounds:
//   primary calls <= n + R * (2n + 1) + 2
//   retry calls   <= parse_retries * (n + R * (n + 1) + 1)

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

#include "agentsbench/dataset.hpp"
#include "agentsbench/llm_backend.hpp"
#include "agentsbench/prompts.hpp"
#include "agentsbench/term_parser.hpp"
#include "agentsbench/types.hpp"
#include "agentsbench/utf8.hpp"

namespace agentsbench {

struct EngineConfig {
  int bench_size = 3;  // total agents including the presiding judge
  int max_rounds = 3;
  int parse_retries = 1;
  std::uint64_t seed = 42;
  bool memory_enabled = false;
  int recall_k = 3;
  // Professional judges wanted among the members; lay judges fill the rest.
  int judge_members = 1;
  std::string presiding_id;  // empty: first presiding judge in the pool

  std::string model = "gpt-4";
  double temperature = 0.0;
  double top_p = 1.0;
  std::optional<int> max_tokens;

  void validate() const {
    if (bench_size < 1) throw std::invalid_argument("bench_size must be >= 1");
    if (max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
    if (parse_retries < 0) throw std::invalid_argument("parse_retries must be >= 0");
    if (recall_k < 0) throw std::invalid_argument("recall_k must be >= 0");
    if (judge_members < 0) throw std::invalid_argument("judge_members must be >= 0");
  }

  long long primary_call_bound() const {
    long long n = bench_size;
    return n + static_cast<long long>(max_rounds) * (2 * n + 1) + 2;
  }
  long long retry_call_bound() const {
    long long n = bench_size;
    return static_cast<long long>(parse_retries) * (n + static_cast<long long>(max_rounds) * (n + 1) + 1);
  }
};

class BenchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A case-level failure. Carries the transcript up to the failure point.
class CaseError : public std::runtime_error {
 public:
  CaseError(const std::string& what, Transcript partial) : std::runtime_error(what), transcript_(std::move(partial)) {}
  const Transcript& transcript() const { return transcript_; }

 private:
  Transcript transcript_;
};

// Append-only precedent store keyed by charge. Appends are serialized;
// concurrent reads are allowed.
class PrecedentMemory {
 public:
  void remember(const std::string& charge, PrecedentEntry entry) {
    std::unique_lock lock(mu_);
    entries_[charge].push_back(std::move(entry));
  }

  // Up to k most recent entries for `charge`, newest first.
  std::vector<PrecedentEntry> recall(const std::string& charge, int k) const {
    std::shared_lock lock(mu_);
    std::vector<PrecedentEntry> out;
    auto it = entries_.find(charge);
    if (it == entries_.end() || k <= 0) return out;
    for (auto e = it->second.rbegin(); e != it->second.rend() && static_cast<int>(out.size()) < k; ++e) {
      out.push_back(*e);
    }
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v.size();
    return n;
  }

 private:
  std::map<std::string, std::vector<PrecedentEntry>> entries_;
  mutable std::shared_mutex mu_;
};

inline void remember_case(PrecedentMemory& memory, const Case& c, const FinalJudgment& judgment) {
  auto summary = utf8::prefix(c.fact, 160);
  if (summary.size() < c.fact.size()) summary += "…";
  memory.remember(c.charge, {c.charge + ": " + summary, judgment.term_months});
}

inline std::vector<PrecedentEntry> recall_similar(const PrecedentMemory& memory, const Case& c, int k) {
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  return memory.recall(c.charge, k);
}

// Agent pool file: one JSON object per line with id, role, persona, focus.
inline std::vector<AgentProfile> load_agent_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BenchError("cannot open agent pool '" + path + "'");
  std::vector<AgentProfile> pool;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (utf8::trim(line).empty()) continue;
    try {
      pool.push_back(profile_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw BenchError("agent pool line " + std::to_string(n) + ": " + e.what());
    }
  }
  return pool;
}

inline std::uint64_t case_seed(std::uint64_t seed, const std::string& case_id) {
  return seed ^ utf8::fnv1a64(case_id);
}

inline Bench select_bench(const std::vector<AgentProfile>& pool, const EngineConfig& config, std::uint64_t seed) {
  config.validate();
  std::map<std::string, int> seen;
  for (const auto& p : pool) {
    if (++seen[p.id] > 1) throw BenchError("duplicate agent id '" + p.id + "' in pool");
  }

  const AgentProfile* presiding = nullptr;
  std::vector<const AgentProfile*> judges;
  std::vector<const AgentProfile*> lay;
  for (const auto& p : pool) {
    if (p.role == AgentRole::kPresidingJudge) {
      if (presiding == nullptr && (config.presiding_id.empty() || p.id == config.presiding_id)) presiding = &p;
    } else if (p.role == AgentRole::kJudge) {
      judges.push_back(&p);
    } else {
      lay.push_back(&p);
    }
  }
  if (presiding == nullptr) {
    throw BenchError(config.presiding_id.empty() ? "no presiding judge in pool"
                                                 : "presiding judge '" + config.presiding_id + "' not in pool");
  }
  std::size_t wanted = static_cast<std::size_t>(config.bench_size - 1);
  if (judges.size() + lay.size() < wanted) {
    throw BenchError("pool too small: bench_size " + std::to_string(config.bench_size) + " needs " +
                     std::to_string(wanted) + " non-presiding agents, pool has " +
                     std::to_string(judges.size() + lay.size()));
  }

  // Partial Fisher-Yates on a fully specified generator so the draw is the
  // same on every platform.
  std::mt19937_64 rng(seed);
  auto draw = [&rng](std::vector<const AgentProfile*>& from, std::size_t k) {
    std::vector<const AgentProfile*> out;
    for (std::size_t i = 0; i < k && i < from.size(); ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng() % (from.size() - i));
      std::swap(from[i], from[j]);
      out.push_back(from[i]);
    }
    from.erase(from.begin(), from.begin() + static_cast<std::ptrdiff_t>(out.size()));
    return out;
  };
  std::size_t n_judges = std::min({static_cast<std::size_t>(config.judge_members), judges.size(), wanted});
  std::size_t n_lay = std::min(wanted - n_judges, lay.size());
  auto picked_judges = draw(judges, n_judges);
  auto picked_lay = draw(lay, n_lay);
  // Not enough lay judges: top up with the remaining professional judges.
  auto extra = draw(judges, wanted - n_judges - n_lay);

  Bench bench;
  bench.presiding = *presiding;
  for (auto* p : picked_judges) bench.members.push_back(*p);
  for (auto* p : extra) bench.members.push_back(*p);
  for (auto* p : picked_lay) bench.members.push_back(*p);
  return bench;
}

// Lower median; ties resolve to the lower value.
inline int lower_median(std::vector<int> terms) {
  if (terms.empty()) throw std::invalid_argument("median of empty set");
  std::sort(terms.begin(), terms.end());
  return terms[(terms.size() - 1) / 2];
}

struct DeliberationState {
  Transcript transcript;
  OpinionSet current;
};

class BenchEngine {
 public:
  BenchEngine(Backend& backend, PromptTemplateSet templates, EngineConfig config, PrecedentMemory* memory = nullptr)
      : backend_(backend), templates_(std::move(templates)), config_(std::move(config)), memory_(memory) {
    config_.validate();
  }

  const EngineConfig& config() const { return config_; }
  const PromptTemplateSet& templates() const { return templates_; }

  OpinionSet independent_sentencing(const Bench& bench, const Case& c, CallStats& calls,
                                    const std::vector<PrecedentEntry>& precedents = {}) const {
    OpinionSet set;
    set.round = 0;
    for (const auto& agent : bench.all()) {
      auto parsed = ask_opinion(build_independent_sentencing_prompt(templates_, c, agent, precedents), calls);
      if (!parsed) {
        if (agent.role == AgentRole::kPresidingJudge && agent.id == bench.presiding.id) {
          throw BenchError("presiding judge opinion unparseable after retries");
        }
        spdlog::warn("case {}: agent {} abstains (opinion unparseable)", c.id, agent.id);
        set.abstained.push_back(agent.id);
        continue;
      }
      set.opinions.push_back({agent.id, parsed->term_months, parsed->rationale, 0, false});
    }
    if (!bench.members.empty() && set.abstained.size() == bench.members.size()) {
      throw BenchError("all bench members abstained");
    }
    return set;
  }

  // One deliberation round over the state's current opinions. On failure the
  // statements gathered so far are left in state.transcript.partial_round.
  DeliberationRound run_round(const Case& c, const Bench& bench, DeliberationState& state) const {
    auto& calls = state.transcript.calls;
    DeliberationRound round;
    round.index = static_cast<int>(state.transcript.rounds.size()) + 1;
    state.transcript.partial_round = round;
    for (const auto& agent : bench.all()) {
      if (state.current.abstains(agent.id)) continue;
      auto msgs = build_statement_prompt(templates_, c, agent, bench, state.current, state.transcript.rounds, round);
      round.statements.push_back({agent.id, call(std::move(msgs), calls, false)});
      state.transcript.partial_round = round;
    }
    auto [verdict, fallback] = evaluate_consensus(bench, state.current, round, calls);
    round.verdict = std::move(verdict);
    round.verdict_fallback = fallback;
    state.transcript.partial_round = round;
    if (!round.verdict.consensus) {
      OpinionSet updated;
      updated.round = round.index;
      updated.abstained = state.current.abstained;
      for (const auto& agent : bench.all()) {
        const auto* own = state.current.find(agent.id);
        if (own == nullptr) continue;
        auto parsed = ask_opinion(build_update_prompt(templates_, c, agent, bench, *own, round), calls);
        if (parsed) {
          updated.opinions.push_back({agent.id, parsed->term_months, parsed->rationale, round.index, false});
        } else {
          spdlog::warn("case {}: agent {} update unparseable, carrying prior opinion forward", c.id, agent.id);
          auto carried = *own;
          carried.round = round.index;
          carried.carried_forward = true;
          updated.opinions.push_back(std::move(carried));
        }
      }
      round.updated_opinions = std::move(updated);
    }
    state.transcript.partial_round.reset();
    return round;
  }

  // Second member: true when the verdict could not be parsed and the
  // conservative no-consensus default was used.
  std::pair<ConsensusParse, bool> evaluate_consensus(const Bench& bench, const OpinionSet& opinions,
                                                     const DeliberationRound& round, CallStats& calls) const {
    if (opinions.opinions.empty()) throw BenchError("consensus evaluation needs at least one opinion");
    auto msgs = build_consensus_prompt(templates_, bench.presiding, bench, opinions, round);
    for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
      auto text = call(msgs, calls, attempt > 0);
      if (auto parsed = parse_consensus(text)) return {*parsed, false};
      msgs.push_back({Role::kAssistant, text});
      msgs.push_back(corrective_reminder(true));
    }
    return {ConsensusParse{false, "Consensus verdict unreadable; treated as no consensus."}, true};
  }

  FinalJudgment synthesize_final(const Case& c, const Bench& bench, DeliberationState& state) const {
    auto& t = state.transcript;
    auto& calls = t.calls;
    FinalJudgment out;
    out.rounds_used = static_cast<int>(t.rounds.size());
    out.consensus_reached = !t.rounds.empty() && t.rounds.back().verdict.consensus;
    auto terms = state.current.terms();
    bool unanimous = !terms.empty() && std::all_of(terms.begin(), terms.end(), [&](int v) { return v == terms[0]; });

    if (out.consensus_reached && unanimous) {
      out.term_months = terms[0];
      out.justification = t.rounds.back().verdict.summary;
    } else {
      auto parsed = ask_opinion(build_synthesis_prompt(templates_, c, bench.presiding, bench, state.current, t.rounds),
                                calls);
      if (parsed) {
        out.term_months = parsed->term_months;
        out.justification = parsed->rationale;
      } else {
        out.term_months = lower_median(terms);
        out.justification = "Synthesis output unreadable; final term is the median of the current member terms.";
        out.fallback = true;
      }
    }
    t.closing_summary = call(
        build_summary_prompt(templates_, c, bench.presiding, bench, state.current, t.rounds, out.term_months), calls,
        false);
    return out;
  }

  // Runs the whole pipeline. Throws CaseError (with the partial transcript)
  // on any case-level failure.
  Transcript run_case(const Case& c, const std::vector<AgentProfile>& pool) const {
    DeliberationState state;
    state.transcript.case_id = c.id;
    try {
      auto bench = select_bench(pool, config_, case_seed(config_.seed, c.id));
      state.transcript.bench = bench;
      std::vector<PrecedentEntry> precedents;
      if (config_.memory_enabled && memory_ != nullptr) precedents = recall_similar(*memory_, c, config_.recall_k);

      state.current = independent_sentencing(bench, c, state.transcript.calls, precedents);
      state.transcript.initial = state.current;
      for (int t = 1; t <= config_.max_rounds; ++t) {
        auto round = run_round(c, bench, state);
        bool done = round.verdict.consensus;
        if (!done) state.current = *round.updated_opinions;
        state.transcript.rounds.push_back(std::move(round));
        if (done) break;
      }
      state.transcript.final = synthesize_final(c, bench, state);
      if (config_.memory_enabled && memory_ != nullptr) remember_case(*memory_, c, *state.transcript.final);
    } catch (const std::exception& e) {
      state.transcript.status = "failed";
      state.transcript.error = e.what();
      throw CaseError(e.what(), std::move(state.transcript));
    }
    return state.transcript;
  }

  std::optional<int> run_baseline_case(const Case& c, BaselineMethod method, std::string* raw_output = nullptr) const {
    auto text = backend_.complete(request(build_baseline_prompt(templates_, c, method)));
    if (raw_output != nullptr) *raw_output = text;
    return extract_prison_term_months(text);
  }

 private:
  CompletionRequest request(std::vector<ChatMessage> messages) const {
    CompletionRequest req;
    req.model = config_.model;
    req.messages = std::move(messages);
    req.temperature = config_.temperature;
    req.top_p = config_.top_p;
    req.max_tokens = config_.max_tokens;
    return req;
  }

  std::string call(std::vector<ChatMessage> messages, CallStats& calls, bool retry) const {
    ++(retry ? calls.retry : calls.primary);
    return backend_.complete(request(std::move(messages)));
  }

  std::optional<ParsedOpinion> ask_opinion(std::vector<ChatMessage> messages, CallStats& calls) const {
    for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
      auto text = call(messages, calls, attempt > 0);
      if (auto parsed = parse_opinion(text)) return parsed;
      messages.push_back({Role::kAssistant, text});
      messages.push_back(corrective_reminder(false));
    }
    return std::nullopt;
  }

  Backend& backend_;
  PromptTemplateSet templates_;
  EngineConfig config_;
  PrecedentMemory* memory_;
};

}  // namespace agentsbench
