#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "agentsbench/term_parser.hpp"
#include "json.hpp"

namespace agentsbench {

enum class AgentRole { kPresidingJudge, kJudge, kLayJudge };

inline std::string_view role_name(AgentRole r) {
  switch (r) {
    case AgentRole::kPresidingJudge: return "presiding_judge";
    case AgentRole::kJudge: return "judge";
    case AgentRole::kLayJudge: return "lay_judge";
  }
  return "judge";
}

inline std::string_view role_title(AgentRole r) {
  switch (r) {
    case AgentRole::kPresidingJudge: return "Presiding Judge";
    case AgentRole::kJudge: return "Judge";
    case AgentRole::kLayJudge: return "Lay Judge";
  }
  return "Judge";
}

inline AgentRole parse_role(std::string_view s) {
  if (s == "presiding_judge") return AgentRole::kPresidingJudge;
  if (s == "judge") return AgentRole::kJudge;
  if (s == "lay_judge" || s == "juror") return AgentRole::kLayJudge;
  throw std::invalid_argument("unknown agent role '" + std::string(s) + "'");
}

struct AgentProfile {
  std::string id;
  AgentRole role = AgentRole::kLayJudge;
  std::string persona;
  std::string focus;

  bool operator==(const AgentProfile&) const = default;
};

struct Bench {
  AgentProfile presiding;
  std::vector<AgentProfile> members;

  // Presiding judge first, then members in bench order.
  std::vector<AgentProfile> all() const {
    std::vector<AgentProfile> out{presiding};
    out.insert(out.end(), members.begin(), members.end());
    return out;
  }
  std::size_t size() const { return members.size() + 1; }
};

struct SentencingOpinion {
  std::string agent_id;
  int term_months = 0;
  std::string rationale;
  int round = 0;
  bool carried_forward = false;

  bool operator==(const SentencingOpinion&) const = default;
};

struct OpinionSet {
  int round = 0;
  std::vector<SentencingOpinion> opinions;
  std::vector<std::string> abstained;

  const SentencingOpinion* find(std::string_view agent_id) const {
    auto it = std::find_if(opinions.begin(), opinions.end(), [&](const auto& o) { return o.agent_id == agent_id; });
    return it == opinions.end() ? nullptr : &*it;
  }
  bool abstains(std::string_view agent_id) const {
    return std::find(abstained.begin(), abstained.end(), agent_id) != abstained.end();
  }
  std::vector<int> terms() const {
    std::vector<int> out;
    for (const auto& o : opinions) out.push_back(o.term_months);
    return out;
  }
};

struct Statement {
  std::string agent_id;
  std::string text;
};

struct DeliberationRound {
  int index = 1;
  std::vector<Statement> statements;
  ConsensusParse verdict;
  bool verdict_fallback = false;  // verdict unparseable, treated as no consensus
  std::optional<OpinionSet> updated_opinions;
};

struct FinalJudgment {
  int term_months = 0;
  std::string justification;
  bool consensus_reached = false;
  int rounds_used = 0;
  bool fallback = false;  // median of member terms, synthesis unparseable
};

struct PrecedentEntry {
  std::string case_summary;
  int term_months = 0;

  bool operator==(const PrecedentEntry&) const = default;
};

struct CallStats {
  int primary = 0;
  int retry = 0;
};

struct Transcript {
  std::string case_id;
  Bench bench;
  OpinionSet initial;
  std::vector<DeliberationRound> rounds;
  std::optional<DeliberationRound> partial_round;  // set only while a round is in progress or failed
  std::optional<FinalJudgment> final;
  std::string closing_summary;
  std::string status = "ok";
  std::string error;
  CallStats calls;
};

inline nlohmann::json to_json(const AgentProfile& p) {
  return {{"id", p.id}, {"role", role_name(p.role)}, {"persona", p.persona}, {"focus", p.focus}};
}

inline AgentProfile profile_from_json(const nlohmann::json& j) {
  AgentProfile p;
  p.id = j.at("id").get<std::string>();
  p.role = parse_role(j.at("role").get<std::string>());
  p.persona = j.value("persona", "");
  p.focus = j.value("focus", "");
  if (p.id.empty()) throw std::invalid_argument("agent profile id is empty");
  return p;
}

inline nlohmann::json to_json(const SentencingOpinion& o) {
  nlohmann::json j = {{"agent_id", o.agent_id}, {"term_months", o.term_months}, {"rationale", o.rationale},
                      {"round", o.round}};
  if (o.carried_forward) j["carried_forward"] = true;
  return j;
}

inline nlohmann::json to_json(const OpinionSet& s) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& o : s.opinions) ops.push_back(to_json(o));
  return {{"round", s.round}, {"opinions", ops}, {"abstained", s.abstained}};
}

inline nlohmann::json to_json(const DeliberationRound& r) {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& s : r.statements) st.push_back({{"agent_id", s.agent_id}, {"text", s.text}});
  nlohmann::json j = {{"index", r.index},
                      {"statements", st},
                      {"verdict", {{"consensus", r.verdict.consensus}, {"summary", r.verdict.summary}}},
                      {"verdict_fallback", r.verdict_fallback}};
  j["updated_opinions"] = r.updated_opinions ? to_json(*r.updated_opinions) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const FinalJudgment& f) {
  return {{"term_months", f.term_months},
          {"justification", f.justification},
          {"consensus_reached", f.consensus_reached},
          {"rounds_used", f.rounds_used},
          {"fallback", f.fallback}};
}

inline nlohmann::json to_json(const Transcript& t) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : t.bench.members) members.push_back(to_json(m));
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : t.rounds) rounds.push_back(to_json(r));
  nlohmann::json j = {{"case_id", t.case_id},
                      {"status", t.status},
                      {"error", t.error},
                      {"bench", {{"presiding", to_json(t.bench.presiding)}, {"members", members}}},
                      {"initial", to_json(t.initial)},
                      {"rounds", rounds},
                      {"final", t.final ? to_json(*t.final) : nlohmann::json(nullptr)},
                      {"closing_summary", t.closing_summary},
                      {"calls", {{"primary", t.calls.primary}, {"retry", t.calls.retry}}}};
  if (t.partial_round) j["partial_round"] = to_json(*t.partial_round);
  return j;
}

}  // namespace agentsbench
