#pragma once

// Message construction for every call the framework makes.
//
// Templates use {{slot}} placeholders. Each template name has a fixed slot
// set (see documented_slots()); loaded templates must use exactly that set.
// Output-format contracts are appended by the builders, not stored in the
// templates, so they always match what term_parser reads.
//
// Slots available per template:
//   system_presiding_judge, system_judge, system_lay_judge: name persona focus
//   baseline_standard, baseline_cot, baseline_ls:           fact charge article
//   independent:      fact charge article precedents
//   statement_presiding, statement_member:
//                     fact charge article round opinions history
//   consensus:        round opinions statements
//   update:           fact charge article round own_opinion statements verdict
//   synthesis:        fact charge article opinions history
//   summary:          fact charge article opinions history final_term
//
// None of the slots can carry the gold term.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "agentsbench/dataset.hpp"
#include "agentsbench/llm_backend.hpp"
#include "agentsbench/term_parser.hpp"
#include "agentsbench/types.hpp"
#include "agentsbench/utf8.hpp"

namespace agentsbench {

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BaselineMethod { kStandard, kCot, kLs };

inline std::string_view method_name(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kStandard: return "standard";
    case BaselineMethod::kCot: return "cot";
    case BaselineMethod::kLs: return "ls";
  }
  return "standard";
}

inline BaselineMethod parse_baseline_method(std::string_view s) {
  if (s == "standard") return BaselineMethod::kStandard;
  if (s == "cot") return BaselineMethod::kCot;
  if (s == "ls") return BaselineMethod::kLs;
  throw PromptError("unknown baseline method '" + std::string(s) + "'");
}

namespace prompt_text {

inline constexpr std::string_view kLegalDirective =
    "Emphasize adherence to legal principles and moderation";
inline constexpr std::string_view kSocietalDirective =
    "Emphasize societal values and ethical considerations";
inline constexpr std::string_view kStepByStep = "Let's think step by step.";
inline constexpr std::string_view kSyllogismDefinition =
    "法律三段论（legal syllogism）的结构：大前提（major premise）是可适用的法律条文；"
    "小前提（minor premise）是案件事实；结论（conclusion）是由大前提和小前提推出的判决。";

}  // namespace prompt_text

// Output-format contracts, built from the parser markers.
namespace contracts {

inline std::string opinion() {
  return std::string(markers::kTermEn) + ": X months\n" + std::string(markers::kReasonEn) + ": <your reasoning>";
}

inline std::string opinion_block() {
  return "Reply in exactly this format, with X an integer number of months:\n" + opinion() + "\n(" +
         std::string(markers::kTermZh) + "：X个月 / " + std::string(markers::kReasonZh) + "：… is also accepted.)";
}

inline std::string baseline() { return std::string(markers::kTermZh) + "：X个月"; }

inline std::string baseline_block() { return "请严格按照以下格式给出刑期（X为月数）：" + baseline(); }

inline std::string consensus() { return std::string(markers::kConclusionEn) + ": Yes/No"; }

inline std::string consensus_block() {
  return "Verdict format: " + consensus() + "\nBegin your reply with exactly one line \"" +
         std::string(markers::kConclusionEn) + ": Yes\" or \"" +
         std::string(markers::kConclusionEn) +
         ": No\". If No, continue with \"Main Points of Disagreement:\" and summarize them. If Yes, state the "
         "agreed sentencing opinion.";
}

inline constexpr std::string_view kStatement = "Reply with your spoken remarks to the bench only.";

inline constexpr std::string_view kSummary = "Summary of Collegial Panel Discussion";

inline std::string summary_block() {
  return "Title your reply \"" + std::string(kSummary) +
         "\" and cover: initial opinions, analysis of differences, how positions were revisited, and the reasons "
         "for the final decision.";
}

}  // namespace contracts

namespace detail {

inline const char* const kSystemPresiding = R"(You are {{name}}, the presiding judge of a collegial bench in a criminal court.
{{persona}}
{{focus}}
You oversee the whole decision-making process: you moderate the deliberation, summarize each member's arguments, evaluate them, and facilitate a consensus-based final decision. Emphasize adherence to legal principles and moderation, and keep the bench anchored to the applicable legal standards.
When asked to evaluate consensus, do not apply a strict numerical threshold; judge whether the members' positions converge in both content and rationale.)";

inline const char* const kSystemJudge = R"(You are {{name}}, a professional judge sitting on a collegial bench in a criminal court.
{{persona}}
{{focus}}
Emphasize adherence to legal principles and moderation: ground your views in the applicable articles, the circumstances of the crime, and established sentencing practice, and engage with your colleagues' arguments.)";

inline const char* const kSystemLayJudge = R"(You are {{name}}, a lay judge sitting on a collegial bench in a criminal court.
{{persona}}
{{focus}}
Emphasize societal values and ethical considerations: bring the perspective of the community, weigh the social effect of the sentence, fairness, and the defendant's circumstances, and take an active part in the discussion.)";

inline const char* const kBaselineStandard = R"(请根据以下案件事实、罪名和法条，预测被告人应被判处的刑期。只输出刑期。
案件事实：{{fact}}
罪名：{{charge}}
法条：{{article}})";

inline const char* const kBaselineCot = R"(请根据以下案件事实、罪名和法条，预测被告人应被判处的刑期。
案件事实：{{fact}}
罪名：{{charge}}
法条：{{article}}
Let's think step by step.)";

inline const char* const kBaselineLs = R"(法律三段论（legal syllogism）的结构：大前提（major premise）是可适用的法律条文；小前提（minor premise）是案件事实；结论（conclusion）是由大前提和小前提推出的判决。
请运用法律三段论，预测被告人应被判处的刑期：先写出大前提，再写出小前提，最后得出结论。
大前提（法条）：{{article}}
小前提（案件事实）：{{fact}}
罪名：{{charge}})";

inline const char* const kIndependent = R"(Case facts:
{{fact}}

Charge(s): {{charge}}

Applicable legal article(s):
{{article}}
{{precedents}}
This is the independent sentencing stage. Evaluate the case on your own and propose an initial prison term, applying your own background, perspective, and knowledge. Do not refer to, speculate about, or defer to the opinions of any other bench member. Document the rationale behind your decision: your interpretation of the law and your view on the specifics of the case.)";

inline const char* const kStatementPresiding = R"(Deliberation round {{round}}.

Case facts:
{{fact}}
Charge(s): {{charge}}
Applicable legal article(s):
{{article}}

Current sentencing opinions of the bench:
{{opinions}}

Discussion so far:
{{history}}

As presiding judge, open this round. First summarize each member's perspective and proposed term, then set out the points of difference as focus questions for the bench, and invite each member to respond.)";

inline const char* const kStatementMember = R"(Deliberation round {{round}}.

Case facts:
{{fact}}
Charge(s): {{charge}}
Applicable legal article(s):
{{article}}

Current sentencing opinions of the bench:
{{opinions}}

Discussion so far:
{{history}}

Respond to the statements made so far: address the presiding judge's focus questions and the other members' arguments, and explain whether you maintain or reconsider your position.)";

inline const char* const kConsensus = R"(Deliberation round {{round}} has finished. As presiding judge, evaluate whether the bench has reached consensus.

Current sentencing opinions (term and rationale):
{{opinions}}

Statements made in this round:
{{statements}}

Consider not only how similar the proposed terms are but also whether the arguments are coherent and converging.)";

inline const char* const kUpdate = R"(Case facts:
{{fact}}
Charge(s): {{charge}}
Applicable legal article(s):
{{article}}

Discussion in deliberation round {{round}}:
{{statements}}

Presiding judge's assessment of this round:
{{verdict}}

Your previous sentencing opinion:
{{own_opinion}}

Reconsider your sentencing opinion in light of the new arguments and perspectives raised by the other members. You may revise the term, or keep your previous term and give further justification for it.)";

inline const char* const kSynthesis = R"(Deliberation has finished. As presiding judge, make the final sentencing decision.

Case facts:
{{fact}}
Charge(s): {{charge}}
Applicable legal article(s):
{{article}}

Final sentencing opinions of the bench:
{{opinions}}

Complete deliberation history:
{{history}}

Analyze the points raised in all rounds, identify recurring themes, and integrate the perspectives of the professional and lay judges. Where the bench converged, ratify that consensus; where disagreements persist, weigh all contributions and use your expertise to determine the appropriate term. Give one final term and a comprehensive justification.)";

inline const char* const kSummary = R"(Case facts:
{{fact}}
Charge(s): {{charge}}
Applicable legal article(s):
{{article}}

Final sentencing opinions of the bench:
{{opinions}}

Complete deliberation history:
{{history}}

The bench's final decision is {{final_term}} months. As presiding judge, write the closing summary of the collegial panel discussion.)";

inline std::set<std::string> slot_set(std::initializer_list<const char*> names) {
  return std::set<std::string>(names.begin(), names.end());
}

}  // namespace detail

// Placeholder names used in a template, in sorted order.
inline std::set<std::string> placeholders(std::string_view tmpl) {
  std::set<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find("{{", pos)) != std::string_view::npos) {
    auto end = tmpl.find("}}", pos + 2);
    if (end == std::string_view::npos) throw PromptError("unterminated placeholder in template");
    auto name = utf8::trim(tmpl.substr(pos + 2, end - pos - 2));
    if (name.empty()) throw PromptError("empty placeholder in template");
    out.insert(name);
    pos = end + 2;
  }
  return out;
}

class PromptTemplateSet {
 public:
  static const std::map<std::string, std::set<std::string>>& documented_slots() {
    using detail::slot_set;
    static const std::map<std::string, std::set<std::string>> kSlots = {
        {"system_presiding_judge", slot_set({"name", "persona", "focus"})},
        {"system_judge", slot_set({"name", "persona", "focus"})},
        {"system_lay_judge", slot_set({"name", "persona", "focus"})},
        {"baseline_standard", slot_set({"fact", "charge", "article"})},
        {"baseline_cot", slot_set({"fact", "charge", "article"})},
        {"baseline_ls", slot_set({"fact", "charge", "article"})},
        {"independent", slot_set({"fact", "charge", "article", "precedents"})},
        {"statement_presiding", slot_set({"fact", "charge", "article", "round", "opinions", "history"})},
        {"statement_member", slot_set({"fact", "charge", "article", "round", "opinions", "history"})},
        {"consensus", slot_set({"round", "opinions", "statements"})},
        {"update", slot_set({"fact", "charge", "article", "round", "own_opinion", "statements", "verdict"})},
        {"synthesis", slot_set({"fact", "charge", "article", "opinions", "history"})},
        {"summary", slot_set({"fact", "charge", "article", "opinions", "history", "final_term"})},
    };
    return kSlots;
  }

  static PromptTemplateSet defaults() {
    PromptTemplateSet set;
    set.templates_ = {
        {"system_presiding_judge", detail::kSystemPresiding},
        {"system_judge", detail::kSystemJudge},
        {"system_lay_judge", detail::kSystemLayJudge},
        {"baseline_standard", detail::kBaselineStandard},
        {"baseline_cot", detail::kBaselineCot},
        {"baseline_ls", detail::kBaselineLs},
        {"independent", detail::kIndependent},
        {"statement_presiding", detail::kStatementPresiding},
        {"statement_member", detail::kStatementMember},
        {"consensus", detail::kConsensus},
        {"update", detail::kUpdate},
        {"synthesis", detail::kSynthesis},
        {"summary", detail::kSummary},
    };
    return set;
  }

  // Defaults overridden by any `<name>.txt` present in `dir`.
  static PromptTemplateSet load(const std::string& dir) {
    auto set = defaults();
    if (!std::filesystem::is_directory(dir)) throw PromptError("template directory '" + dir + "' not found");
    for (const auto& [name, _] : documented_slots()) {
      auto path = std::filesystem::path(dir) / (name + ".txt");
      if (!std::filesystem::exists(path)) continue;
      std::ifstream in(path);
      std::stringstream ss;
      ss << in.rdbuf();
      set.set(name, ss.str());
    }
    return set;
  }

  void set(const std::string& name, std::string text) {
    auto slots = documented_slots().find(name);
    if (slots == documented_slots().end()) throw PromptError("unknown template '" + name + "'");
    auto used = placeholders(text);
    if (used != slots->second) {
      std::string want;
      for (const auto& s : slots->second) want += " " + s;
      throw PromptError("template '" + name + "' must use exactly the slots:" + want);
    }
    templates_[name] = std::move(text);
  }

  const std::string& text(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw PromptError("unknown template '" + name + "'");
    return it->second;
  }

  std::string render(const std::string& name, const std::map<std::string, std::string>& slots) const {
    const auto& tmpl = text(name);
    std::string out;
    std::size_t pos = 0;
    while (true) {
      auto open = tmpl.find("{{", pos);
      if (open == std::string::npos) {
        out.append(tmpl, pos, std::string::npos);
        break;
      }
      auto close = tmpl.find("}}", open + 2);
      out.append(tmpl, pos, open - pos);
      auto key = utf8::trim(std::string_view(tmpl).substr(open + 2, close - open - 2));
      auto it = slots.find(key);
      if (it == slots.end()) throw PromptError("slot '" + key + "' unbound in template '" + name + "'");
      out += it->second;
      pos = close + 2;
    }
    return collapse_blank_lines(out);
  }

  std::map<std::string, std::string> hashes() const {
    std::map<std::string, std::string> out;
    for (const auto& [name, body] : templates_) out[name] = utf8::hex64(utf8::fnv1a64(body));
    return out;
  }

  // Character budget for rendered deliberation history; oldest rounds go first.
  std::size_t history_budget_chars = 24000;

 private:
  static std::string collapse_blank_lines(const std::string& s) {
    std::string out;
    int newlines = 0;
    for (char c : s) {
      if (c == '\n') {
        if (++newlines > 2) continue;
      } else {
        newlines = 0;
      }
      out.push_back(c);
    }
    return utf8::trim(out);
  }

  std::map<std::string, std::string> templates_;
};

namespace detail {

inline std::map<std::string, std::string> case_slots(const Case& c) {
  return {{"fact", c.fact}, {"charge", c.charge}, {"article", c.article}};
}

inline std::string speaker_label(const Bench& bench, std::string_view agent_id) {
  for (const auto& p : bench.all()) {
    if (p.id == agent_id) return std::string(role_title(p.role)) + " " + p.id;
  }
  return std::string(agent_id);
}

inline std::string render_opinions(const Bench& bench, const OpinionSet& set) {
  std::string out;
  for (const auto& o : set.opinions) {
    out += "- " + speaker_label(bench, o.agent_id) + ": " + std::to_string(o.term_months) + " months\n  Reason: " +
           o.rationale + "\n";
  }
  for (const auto& a : set.abstained) out += "- " + speaker_label(bench, a) + ": abstained\n";
  return out.empty() ? "(none)" : out;
}

inline std::string render_statements(const Bench& bench, const std::vector<Statement>& statements) {
  std::string out;
  for (const auto& s : statements) out += "[" + speaker_label(bench, s.agent_id) + "]:\n" + s.text + "\n\n";
  return out.empty() ? "(none)" : out;
}

inline std::string render_round(const Bench& bench, const DeliberationRound& r, bool complete) {
  std::string out = "Round " + std::to_string(r.index) + (complete ? "" : " (in progress)") + ":\n";
  out += render_statements(bench, r.statements);
  if (complete) {
    out += "Presiding judge's consensus evaluation: " + std::string(r.verdict.consensus ? "Yes" : "No");
    if (!r.verdict.summary.empty()) out += "\n" + r.verdict.summary;
    out += "\n";
    if (r.updated_opinions) out += "Updated opinions after round " + std::to_string(r.index) + ":\n" +
                                   render_opinions(bench, *r.updated_opinions);
  }
  return out;
}

// Renders completed rounds plus an optional in-progress round, dropping the
// oldest completed rounds when over budget.
inline std::string render_history(const Bench& bench, const std::vector<DeliberationRound>& rounds,
                                  const DeliberationRound* in_progress, std::size_t budget) {
  std::vector<std::string> blocks;
  std::size_t used = 0;
  if (in_progress != nullptr && !in_progress->statements.empty()) {
    blocks.push_back(render_round(bench, *in_progress, false));
    used += utf8::length(blocks.back());
  }
  std::size_t omitted = 0;
  for (auto it = rounds.rbegin(); it != rounds.rend(); ++it) {
    auto block = render_round(bench, *it, true);
    auto len = utf8::length(block);
    if (used + len > budget) {
      omitted = static_cast<std::size_t>(std::distance(it, rounds.rend()));
      break;
    }
    used += len;
    blocks.push_back(std::move(block));
  }
  std::string out;
  if (omitted > 0) out += "[" + std::to_string(omitted) + " earlier round(s) omitted]\n\n";
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) out += *it + "\n";
  return out.empty() ? "(no discussion yet)" : out;
}

inline std::string render_precedents(const std::vector<PrecedentEntry>& precedents) {
  if (precedents.empty()) return "";
  std::string out = "\nPrecedents you have encountered in similar cases:\n";
  for (const auto& p : precedents) out += "- " + p.case_summary + " -> " + std::to_string(p.term_months) + " months\n";
  return out;
}

inline ChatMessage user(std::string text) { return {Role::kUser, std::move(text)}; }

}  // namespace detail

inline ChatMessage build_role_system_prompt(const PromptTemplateSet& t, const AgentProfile& profile) {
  std::string name;
  switch (profile.role) {
    case AgentRole::kPresidingJudge: name = "system_presiding_judge"; break;
    case AgentRole::kJudge: name = "system_judge"; break;
    case AgentRole::kLayJudge: name = "system_lay_judge"; break;
    default: throw PromptError("unknown agent role");
  }
  std::map<std::string, std::string> slots = {
      {"name", profile.id},
      {"persona", profile.persona.empty() ? "" : "Background: " + profile.persona},
      {"focus", profile.focus.empty() ? "" : "Focus: " + profile.focus},
  };
  auto text = t.render(name, slots);
  if (profile.role == AgentRole::kPresidingJudge) text += "\n\n" + contracts::consensus_block();
  return {Role::kSystem, std::move(text)};
}

inline std::vector<ChatMessage> build_baseline_prompt(const PromptTemplateSet& t, const Case& c, BaselineMethod method) {
  std::string name;
  switch (method) {
    case BaselineMethod::kStandard: name = "baseline_standard"; break;
    case BaselineMethod::kCot: name = "baseline_cot"; break;
    case BaselineMethod::kLs: name = "baseline_ls"; break;
    default: throw PromptError("unknown baseline method");
  }
  return {detail::user(t.render(name, detail::case_slots(c)) + "\n\n" + contracts::baseline_block())};
}

inline std::vector<ChatMessage> build_independent_sentencing_prompt(const PromptTemplateSet& t, const Case& c,
                                                                    const AgentProfile& profile,
                                                                    const std::vector<PrecedentEntry>& precedents = {}) {
  auto slots = detail::case_slots(c);
  slots["precedents"] = detail::render_precedents(precedents);
  return {build_role_system_prompt(t, profile),
          detail::user(t.render("independent", slots) + "\n\n" + contracts::opinion_block())};
}

// `prior` are completed rounds; `current` holds this round's statements so far.
inline std::vector<ChatMessage> build_statement_prompt(const PromptTemplateSet& t, const Case& c,
                                                       const AgentProfile& profile, const Bench& bench,
                                                       const OpinionSet& opinions,
                                                       const std::vector<DeliberationRound>& prior,
                                                       const DeliberationRound& current) {
  if (current.index < 1) throw PromptError("round index must be >= 1");
  auto slots = detail::case_slots(c);
  slots["round"] = std::to_string(current.index);
  slots["opinions"] = detail::render_opinions(bench, opinions);
  slots["history"] = detail::render_history(bench, prior, &current, t.history_budget_chars);
  auto name = profile.role == AgentRole::kPresidingJudge ? "statement_presiding" : "statement_member";
  return {build_role_system_prompt(t, profile),
          detail::user(t.render(name, slots) + "\n\n" + std::string(contracts::kStatement))};
}

inline std::vector<ChatMessage> build_consensus_prompt(const PromptTemplateSet& t, const AgentProfile& presiding,
                                                       const Bench& bench, const OpinionSet& opinions,
                                                       const DeliberationRound& round) {
  std::map<std::string, std::string> slots = {
      {"round", std::to_string(round.index)},
      {"opinions", detail::render_opinions(bench, opinions)},
      {"statements", detail::render_statements(bench, round.statements)},
  };
  return {build_role_system_prompt(t, presiding),
          detail::user(t.render("consensus", slots) + "\n\n" + contracts::consensus_block())};
}

inline std::vector<ChatMessage> build_update_prompt(const PromptTemplateSet& t, const Case& c,
                                                    const AgentProfile& profile, const Bench& bench,
                                                    const SentencingOpinion& own, const DeliberationRound& round) {
  auto slots = detail::case_slots(c);
  slots["round"] = std::to_string(round.index);
  slots["statements"] = detail::render_statements(bench, round.statements);
  slots["verdict"] = round.verdict.summary.empty() ? "(no summary)" : round.verdict.summary;
  slots["own_opinion"] = std::to_string(own.term_months) + " months\nReason: " + own.rationale;
  return {build_role_system_prompt(t, profile),
          detail::user(t.render("update", slots) + "\n\n" + contracts::opinion_block())};
}

inline std::vector<ChatMessage> build_synthesis_prompt(const PromptTemplateSet& t, const Case& c,
                                                       const AgentProfile& presiding, const Bench& bench,
                                                       const OpinionSet& final_opinions,
                                                       const std::vector<DeliberationRound>& history) {
  auto slots = detail::case_slots(c);
  slots["opinions"] = detail::render_opinions(bench, final_opinions);
  slots["history"] = detail::render_history(bench, history, nullptr, t.history_budget_chars);
  return {build_role_system_prompt(t, presiding),
          detail::user(t.render("synthesis", slots) + "\n\n" + contracts::opinion_block())};
}

inline std::vector<ChatMessage> build_summary_prompt(const PromptTemplateSet& t, const Case& c,
                                                     const AgentProfile& presiding, const Bench& bench,
                                                     const OpinionSet& final_opinions,
                                                     const std::vector<DeliberationRound>& history, int final_term) {
  auto slots = detail::case_slots(c);
  slots["opinions"] = detail::render_opinions(bench, final_opinions);
  slots["history"] = detail::render_history(bench, history, nullptr, t.history_budget_chars);
  slots["final_term"] = std::to_string(final_term);
  return {build_role_system_prompt(t, presiding),
          detail::user(t.render("summary", slots) + "\n\n" + contracts::summary_block())};
}

// Appended after an unparseable reply before re-asking.
inline ChatMessage corrective_reminder(bool consensus_stage) {
  return detail::user("Your previous reply could not be read. " +
                      (consensus_stage ? contracts::consensus_block() : contracts::opinion_block()));
}

}  // namespace agentsbench
