#include "skevo/maintenance.hpp"

#include <algorithm>
#include <stdexcept>

#include "skevo/parsing.hpp"
#include "skevo/text.hpp"

namespace skevo {

CreditCounters& CreditTable::row(const std::string& id, int version) {
  return rows_[{id, version}];
}

const CreditCounters* CreditTable::find(const std::string& id, int version) const {
  auto it = rows_.find({id, version});
  return it == rows_.end() ? nullptr : &it->second;
}

namespace {

std::string default_scope(const Trace& trace) {
  return text::truncate_bytes(render_trace(trace), 160);
}

std::string render_exposed(const std::vector<SkillRetrievalView>& exposed) {
  std::string out;
  for (const auto& view : exposed) {
    out += "- " + view.version_ref() + " " + view.name + "\n";
  }
  return out;
}

}  // namespace

std::vector<CreditEvent> assign_credit(const Trace& trace, const Utility& utility,
                                       const std::vector<SkillRetrievalView>& exposed,
                                       ChatClient& client, const PromptLibrary& prompts,
                                       const RunConfig& config) {
  std::vector<CreditEvent> events;
  if (exposed.empty()) return events;

  // Precondition: every listed skill must actually appear in the trace's
  // retrieval records.
  const auto refs = exposed_refs(trace);
  for (const auto& view : exposed) {
    if (std::find(refs.begin(), refs.end(), view.version_ref()) == refs.end()) {
      throw std::invalid_argument("assign_credit: skill " + view.version_ref() +
                                  " was not exposed in the trace");
    }
  }

  const std::string trace_render = render_trace(trace);
  const std::string prompt = prompts.render(
      RoleTag::credit,
      {{"skills", render_exposed(exposed)},
       {"utility", text::format_fixed(utility.score, 2)},
       {"trace", trace_render}},
      config);

  std::optional<std::string> response;
  for (int attempt = 0; attempt <= config.retry_budget && !response; ++attempt) {
    try {
      response = client.chat(ChatRequest::for_role(RoleTag::credit, prompt));
    } catch (const OracleError&) {
      // retry; all-uncertain fallback below when the budget runs out
    }
  }

  std::vector<ParsedCreditLine> lines;
  if (response) lines = parse_credit_lines(*response);

  for (const auto& view : exposed) {
    CreditEvent event;
    event.skill_id = view.id;
    event.skill_version = view.version;
    event.task_id = trace.task_id;
    event.judgment = Judgment::uncertain;
    event.rationale = response ? "unparseable judgment" : "oracle failure";
    const ParsedCreditLine* wildcard = nullptr;
    const ParsedCreditLine* match = nullptr;
    for (const auto& line : lines) {
      if (line.target == view.id || line.target == view.name ||
          line.target == view.version_ref()) {
        match = &line;
        break;
      }
      if (line.target == "*" && !wildcard) wildcard = &line;
    }
    if (!match) match = wildcard;
    if (match) {
      event.judgment = match->judgment;
      event.rationale = match->rationale;
      event.attribution_scope = match->scope;
    }
    // Scope must quote the trace; fall back to a deterministic fragment.
    if (event.attribution_scope.empty() ||
        !text::contains(trace_render, event.attribution_scope)) {
      event.attribution_scope = default_scope(trace);
    }
    events.push_back(std::move(event));
  }
  return events;
}

void update_credit_table(CreditTable& table, const std::vector<CreditEvent>& events) {
  for (const auto& event : events) {
    auto& row = table.row(event.skill_id, event.skill_version);
    switch (event.judgment) {
      case Judgment::helpful: ++row.helpful; break;
      case Judgment::harmful: ++row.harmful; break;
      case Judgment::neutral: ++row.neutral; break;
      case Judgment::uncertain: ++row.uncertain; break;
    }
  }
}

bool filter_gate(long harmful, long helpful, long tau, long tau_protect) {
  return harmful >= tau && helpful < tau_protect;
}

GateResult run_bundle(const Skill& skill, const TestBundle& bundle, ChatClient& client,
                      const PromptLibrary& prompts, const RunConfig& config) {
  if (bundle.skill_id != skill.id || bundle.skill_version != skill.version) {
    throw std::invalid_argument("run_bundle: bundle targets " + bundle.skill_id + "@v" +
                                std::to_string(bundle.skill_version) + ", not " +
                                skill.version_ref());
  }
  GateResult result;
  if (bundle.cases.empty()) {
    if (skill.semantics == Semantics::knowledge) {
      result.passed = true;  // no executable contract to check
    } else {
      result.passed = false;
      result.failure_digest = "bundle missing";
    }
    return result;
  }

  result.passed = true;
  for (const auto& test_case : bundle.cases) {
    GateResult::CaseResult case_result;
    case_result.case_digest =
        to_string(test_case.kind) + ":" + text::truncate_bytes(test_case.input_fragment, 80);
    const std::string prompt = prompts.render(RoleTag::bundle_verdict,
                                              {{"skill_body", skill.body},
                                               {"kind", to_string(test_case.kind)},
                                               {"case_input", test_case.input_fragment},
                                               {"expected", test_case.expected_behavior},
                                               {"rule", test_case.verdict_rule}},
                                              config);
    try {
      const auto response = client.chat(ChatRequest::for_role(RoleTag::bundle_verdict, prompt));
      const auto verdict = parse_verdict(response);
      case_result.passed = verdict.verdict == Verdict::pass;
      case_result.detail = verdict.detail;
    } catch (const OracleError& e) {
      case_result.passed = false;  // oracle failure gates conservatively
      case_result.detail = e.what();
    }
    if (!case_result.passed) {
      result.passed = false;
      if (!result.failure_digest.empty()) result.failure_digest += "; ";
      result.failure_digest += case_result.case_digest + " (" + case_result.detail + ")";
    }
    result.case_results.push_back(std::move(case_result));
  }
  return result;
}

namespace {

void append_case_capped(TestBundle& bundle, BundleCase new_case, const RunConfig& config) {
  const auto digest_of = [](const BundleCase& c) { return text::fnv1a64(c.input_fragment); };
  const auto new_digest = digest_of(new_case);
  for (const auto& existing : bundle.cases) {
    if (digest_of(existing) == new_digest) return;  // dedup by input digest
  }
  if (static_cast<int>(bundle.cases.size()) >= config.bundle_case_cap) {
    auto oldest_unit = std::find_if(bundle.cases.begin(), bundle.cases.end(),
                                    [](const BundleCase& c) { return c.kind == CaseKind::unit; });
    if (oldest_unit != bundle.cases.end()) {
      bundle.cases.erase(oldest_unit);
    } else {
      bundle.cases.erase(bundle.cases.begin());
    }
  }
  bundle.cases.push_back(std::move(new_case));
}

}  // namespace

TestBundle patch_bundle(TestBundle bundle, const CreditEvent& event, const RunConfig& config) {
  if (event.skill_id != bundle.skill_id) {
    throw std::invalid_argument("patch_bundle: event references " + event.skill_id +
                                ", bundle targets " + bundle.skill_id);
  }
  if (event.judgment == Judgment::neutral || event.judgment == Judgment::uncertain) {
    return bundle;
  }
  BundleCase derived;
  if (event.judgment == Judgment::harmful) {
    derived.kind = CaseKind::negative;
    derived.expected_behavior = "the skill must not repeat the harmful behavior";
  } else {
    derived.kind = CaseKind::unit;
    derived.expected_behavior = "the skill keeps producing the helpful behavior";
  }
  derived.input_fragment = event.attribution_scope;
  derived.verdict_rule = event.rationale.empty() ? "judge against the fragment above"
                                                 : event.rationale;
  append_case_capped(bundle, std::move(derived), config);
  return bundle;
}

TestBundle patch_bundle_from_failure(TestBundle bundle, const GateResult& failure,
                                     const RunConfig& config) {
  if (failure.passed || failure.failure_digest.empty()) return bundle;
  BundleCase derived;
  derived.kind = CaseKind::integration;
  derived.input_fragment = failure.failure_digest;
  derived.expected_behavior = "the revised skill resolves the gate failure";
  derived.verdict_rule = "judge against the failure digest";
  append_case_capped(bundle, std::move(derived), config);
  return bundle;
}

std::string render_rules(const MetaRuleSet& rules) {
  if (rules.rules.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i < rules.rules.size(); ++i) {
    out += std::to_string(i + 1) + ". " + rules.rules[i] + "\n";
  }
  return out;
}

std::string render_evidence_digest(const Skill& skill, const EvidenceState& evidence,
                                   const RunConfig& config) {
  std::string out;
  out += "signature: " + skill.version_ref() + " " + to_string(skill.semantics) + " " +
         skill.name + "\n";
  long helpful = 0, harmful = 0, neutral = 0, uncertain = 0;
  for (const auto& credit : evidence.credits) {
    switch (credit.judgment) {
      case Judgment::helpful: ++helpful; break;
      case Judgment::harmful: ++harmful; break;
      case Judgment::neutral: ++neutral; break;
      case Judgment::uncertain: ++uncertain; break;
    }
  }
  out += "credit: helpful=" + std::to_string(helpful) + " harmful=" + std::to_string(harmful) +
         " neutral=" + std::to_string(neutral) + " uncertain=" + std::to_string(uncertain) +
         "\n";
  out += "usage: retrieved=" + std::to_string(evidence.usage.retrieved_count) +
         " executed=" + std::to_string(evidence.usage.executed_count) +
         " exposed=" + std::to_string(evidence.usage.exposed_count) + "\n";
  out += "bundle: " + std::to_string(evidence.bundle.cases.size()) + " cases\n";
  for (const auto& credit : evidence.credits) {
    if (credit.judgment == Judgment::harmful) {
      out += "harmful fragment: " + text::truncate_bytes(credit.attribution_scope, 200) + "\n";
    }
  }
  return text::truncate_bytes(out, static_cast<std::size_t>(config.evidence_slot_limit));
}

std::optional<RefinedCandidate> refine(const Skill& skill, Stage stage,
                                       const EvidenceState& evidence, const MetaRuleSet& rules,
                                       ChatClient& client, const PromptLibrary& prompts,
                                       const RunConfig& config) {
  if (stage != Stage::trial && stage != Stage::active) {
    throw std::invalid_argument("refine: skill " + skill.version_ref() + " is " +
                                to_string(stage) + ", expected trial or active");
  }
  if (!(evidence.bundle.skill_id.empty() || evidence.bundle.skill_id == skill.id)) {
    throw std::invalid_argument("refine: evidence bundle targets a different skill");
  }

  const std::string skill_render =
      "name: " + skill.name + "\nsemantics: " + to_string(skill.semantics) +
      "\ndescription: " + skill.description +
      "\ntriggers: " + text::join(skill.trigger_conditions, " | ") + "\nbody:\n" + skill.body;
  const std::string prompt =
      prompts.render(RoleTag::refiner,
                     {{"rules", render_rules(rules)},
                      {"version", std::to_string(skill.version)},
                      {"skill", skill_render},
                      {"evidence", render_evidence_digest(skill, evidence, config)}},
                     config);

  for (int attempt = 0; attempt <= config.retry_budget; ++attempt) {
    std::string response;
    try {
      response = client.chat(ChatRequest::for_role(RoleTag::refiner, prompt));
    } catch (const OracleError&) {
      continue;
    }
    auto candidates = parse_skill_blocks(response);
    if (candidates.empty()) continue;  // includes explicit NO CHANGE
    const auto& parsed = candidates.front();

    RefinedCandidate revision;
    revision.skill.id = skill.id;
    revision.skill.version = skill.version + 1;
    revision.skill.parent_id = skill.version_ref();
    revision.skill.semantics = parsed.skill.semantics;
    revision.skill.name = parsed.skill.name;
    revision.skill.description = parsed.skill.description;
    revision.skill.trigger_conditions = parsed.skill.triggers;
    revision.skill.allowed_tools = parsed.skill.tools;
    revision.skill.domains = parsed.skill.domains;
    revision.skill.body = parsed.skill.body;
    revision.skill.source_role = Role::refiner;
    revision.skill.created_at_task = skill.created_at_task;

    revision.bundle.skill_id = skill.id;
    revision.bundle.skill_version = revision.skill.version;
    if (!parsed.bundle_cases.empty()) {
      revision.bundle.cases = parsed.bundle_cases;  // revised bundle
    } else {
      revision.bundle.cases = evidence.bundle.cases;  // inherited
    }
    return revision;
  }
  return std::nullopt;
}

}  // namespace skevo
