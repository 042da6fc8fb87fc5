#include "skevo/roles.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "skevo/parsing.hpp"
#include "skevo/text.hpp"

namespace skevo {

namespace {

Skill materialize(const ParsedSkill& parsed, Role role, int task_index) {
  Skill skill;
  skill.version = 1;
  skill.semantics = parsed.semantics;
  skill.name = parsed.name;
  skill.description = parsed.description;
  skill.trigger_conditions = parsed.triggers;
  skill.allowed_tools = parsed.tools;
  skill.domains = parsed.domains;
  skill.body = parsed.body;
  skill.source_role = role;
  skill.created_at_task = task_index;
  return skill;
}

TestBundle materialize_bundle(const ParsedCandidate& parsed) {
  TestBundle bundle;
  bundle.cases = parsed.bundle_cases;
  return bundle;
}

std::string dedup_key(const Skill& skill) {
  return skill.name + "\x1f" +
         text::fnv1a64_hex(text::join(skill.trigger_conditions, "|"));
}

}  // namespace

std::vector<RoleCandidate> extract(const Trace& trace, const Utility& utility,
                                   const MetaRuleSet& rules, ChatClient& client,
                                   const PromptLibrary& prompts, const RunConfig& config,
                                   int task_index) {
  const int n_samples = std::max(1, config.extractor_samples);
  const std::string prompt =
      prompts.render(RoleTag::extractor,
                     {{"rules", render_rules(rules)},
                      {"utility", text::format_fixed(utility.score, 2)},
                      {"trace", render_trace(trace)}},
                     config);

  std::vector<RoleCandidate> candidates;
  std::set<std::string> seen;
  for (int sample = 0; sample < n_samples; ++sample) {
    std::string response;
    try {
      response = client.chat(ChatRequest::for_role(RoleTag::extractor, prompt));
    } catch (const OracleError&) {
      continue;  // fewer candidates, loop keeps going
    }
    for (const auto& parsed : parse_skill_blocks(response)) {
      RoleCandidate candidate{materialize(parsed.skill, Role::extractor, task_index),
                              materialize_bundle(parsed)};
      if (seen.insert(dedup_key(candidate.skill)).second) {
        candidates.push_back(std::move(candidate));
      }
    }
  }
  return candidates;
}

namespace {

std::string render_group(const CandidateGroup& group, const OverlapGraph& graph) {
  std::string out;
  for (const auto& id : group.members) {
    const auto& node = graph.nodes().at(id);
    out += "member " + id + " (from " + node.provenance + "):\n";
    out += node.text + "\n";
    if (!node.tool_calls.empty()) {
      out += "tools: " + text::join(node.tool_calls, ", ") + "\n";
    }
    for (const auto& err : node.error_texts) {
      out += "error: " + err + "\n";
    }
    out += "\n";
  }
  return out;
}

// "Supported by all true instances": each member must match the candidate
// tool-wise (every declared tool called or carried by the member) or
// lexically (some trigger phrase appears in the member text).
bool supported_by(const GraphNode& member, const Skill& candidate) {
  if (!candidate.allowed_tools.empty()) {
    std::set<std::string> member_tools;
    for (const auto& call_text : member.tool_calls) {
      if (auto call = parse_tool_call(call_text)) member_tools.insert(call->name);
    }
    bool all_present = true;
    for (const auto& tool : candidate.allowed_tools) {
      if (!member_tools.count(tool)) {
        all_present = false;
        break;
      }
    }
    if (all_present) return true;
  }
  const auto member_text = text::to_lower(member.text);
  for (const auto& trigger : candidate.trigger_conditions) {
    if (!trigger.empty() && text::contains(member_text, text::to_lower(trigger))) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<RoleCandidate> refactor(const CandidateGroup& group, const OverlapGraph& graph,
                                    const MetaRuleSet& rules, ChatClient& client,
                                    const PromptLibrary& prompts, const RunConfig& config,
                                    int task_index) {
  if (group.members.empty()) {
    throw std::invalid_argument("refactor: empty candidate group");
  }
  const std::string prompt =
      prompts.render(RoleTag::refactorer,
                     {{"rules", render_rules(rules)},
                      {"purity", to_string(group.purity)},
                      {"sources", std::to_string(group.distinct_source_tasks)},
                      {"group", render_group(group, graph)}},
                     config);

  std::string response;
  try {
    response = client.chat(ChatRequest::for_role(RoleTag::refactorer, prompt));
  } catch (const OracleError&) {
    return {};
  }

  std::vector<RoleCandidate> accepted;
  for (const auto& parsed : parse_skill_blocks(response)) {
    Skill skill = materialize(parsed.skill, Role::refactorer, task_index);
    bool supported = true;
    for (const auto& member_id : group.members) {
      if (!supported_by(graph.nodes().at(member_id), skill)) {
        supported = false;
        break;
      }
    }
    if (supported) {
      accepted.push_back({std::move(skill), materialize_bundle(parsed)});
    }
  }
  return accepted;
}

void record_outcome(std::vector<ReplayRow>& buffer, const Skill& skill,
                    const EvidenceState& evidence, const RunConfig& config, long task_index) {
  ReplayRow row;
  row.role = skill.source_role;
  row.skill_id = skill.id;
  row.skill_version = skill.version;
  row.evidence = evidence;
  row.mature = evidence.usage.exposed_count >= config.maturity_min_exposures;
  row.recorded_at_task = task_index;
  auto existing = std::find_if(buffer.begin(), buffer.end(), [&](const ReplayRow& r) {
    return r.skill_id == row.skill_id;
  });
  if (existing != buffer.end()) {
    *existing = std::move(row);
  } else {
    buffer.push_back(std::move(row));
  }
}

namespace {

std::string render_buffer_evidence(const std::vector<const ReplayRow*>& rows,
                                   const RunConfig& config) {
  std::string out;
  for (const auto* row : rows) {
    long helpful = 0, harmful = 0, neutral = 0, uncertain = 0;
    for (const auto& credit : row->evidence.credits) {
      switch (credit.judgment) {
        case Judgment::helpful: ++helpful; break;
        case Judgment::harmful: ++harmful; break;
        case Judgment::neutral: ++neutral; break;
        case Judgment::uncertain: ++uncertain; break;
      }
    }
    out += "row " + row->skill_id + "@v" + std::to_string(row->skill_version);
    out += " credit(h=" + std::to_string(helpful) + ",x=" + std::to_string(harmful) +
           ",n=" + std::to_string(neutral) + ",u=" + std::to_string(uncertain) + ")";
    out += " bundle_cases=" + std::to_string(row->evidence.bundle.cases.size());
    out += " exposed=" + std::to_string(row->evidence.usage.exposed_count);
    out += row->skill_version > 1 ? " revised_from_parent" : " first_version";
    out += "\n";
  }
  return text::truncate_bytes(out, static_cast<std::size_t>(config.evidence_slot_limit));
}

}  // namespace

MetaRuleSet update_role_rules(Role role, const MetaRuleSet& rules,
                              const std::vector<ReplayRow>& buffer, int sample_n,
                              ChatClient& client, const PromptLibrary& prompts,
                              const RunConfig& config, long task_index) {
  std::vector<const ReplayRow*> mature;
  for (const auto& row : buffer) {
    if (row.mature) mature.push_back(&row);
  }
  if (mature.empty()) return rules;  // nothing to summarize, no oracle call

  // Uniform sample without replacement, seeded by (run seed, task, role) so
  // replays are deterministic.
  const std::string seed_material = std::to_string(config.seed) + "/" +
                                    std::to_string(task_index) + "/" + to_string(role);
  std::uint64_t state = text::fnv1a64(seed_material);
  auto next = [&state]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  };
  for (std::size_t i = mature.size(); i > 1; --i) {
    std::swap(mature[i - 1], mature[next() % i]);
  }
  if (mature.size() > static_cast<std::size_t>(std::max(1, sample_n))) {
    mature.resize(static_cast<std::size_t>(sample_n));
  }

  const std::string prompt = prompts.render(RoleTag::meta,
                                            {{"role", to_string(role)},
                                             {"rules", render_rules(rules)},
                                             {"evidence", render_buffer_evidence(mature, config)}},
                                            config);
  std::string response;
  try {
    response = client.chat(ChatRequest::for_role(RoleTag::meta, prompt));
  } catch (const OracleError&) {
    return rules;
  }
  auto parsed = parse_meta_rules(response);
  if (!parsed) return rules;

  MetaRuleSet updated;
  updated.role = role;
  updated.updated_at_task = static_cast<int>(task_index);
  for (auto& rule : *parsed) {
    if (static_cast<int>(updated.rules.size()) >= kMaxMetaRules) break;
    updated.rules.push_back(std::move(rule));
  }
  return updated;
}

}  // namespace skevo
