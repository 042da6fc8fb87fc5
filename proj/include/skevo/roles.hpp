#pragma once

#include <string>
#include <vector>

#include "skevo/config.hpp"
#include "skevo/maintenance.hpp"
#include "skevo/oracle.hpp"
#include "skevo/overlap_graph.hpp"
#include "skevo/prompts.hpp"
#include "skevo/skill.hpp"
#include "skevo/trace.hpp"

namespace skevo {

// One replay-buffer entry linking a produced artifact to its later evidence.
struct ReplayRow {
  Role role = Role::extractor;
  std::string skill_id;
  int skill_version = 1;
  std::string group_digest;  // for refactorer rows
  EvidenceState evidence;
  bool mature = false;
  long recorded_at_task = 0;
};

struct RoleCandidate {
  Skill skill;
  TestBundle bundle;  // id/version targets are filled in at publish time
};

// Samples the extractor n_samples times over the same trace prompt and
// merges duplicates by (name, trigger digest). Oracle failures reduce the
// candidate count and never abort the loop.
std::vector<RoleCandidate> extract(const Trace& trace, const Utility& utility,
                                   const MetaRuleSet& rules, ChatClient& client,
                                   const PromptLibrary& prompts, const RunConfig& config,
                                   int task_index);

// One refactorer call per candidate group. A candidate survives only when
// every member segment supports it: all declared tools appear in the member
// or a trigger matches the member text.
std::vector<RoleCandidate> refactor(const CandidateGroup& group, const OverlapGraph& graph,
                                    const MetaRuleSet& rules, ChatClient& client,
                                    const PromptLibrary& prompts, const RunConfig& config,
                                    int task_index);

// Upserts the role row for the skill with its latest evidence snapshot;
// maturity flips once exposures reach the configured minimum.
void record_outcome(std::vector<ReplayRow>& buffer, const Skill& skill,
                    const EvidenceState& evidence, const RunConfig& config, long task_index);

// Alg.-style meta update: sample mature rows (seeded by run seed, task
// index and role), build the evidence digest, and accept at most five
// normalized rules from a response with analysis/summary/rules sections.
// Every failure path degrades to returning the input rules unchanged; an
// empty buffer (or one with no mature rows) makes no oracle call.
MetaRuleSet update_role_rules(Role role, const MetaRuleSet& rules,
                              const std::vector<ReplayRow>& buffer, int sample_n,
                              ChatClient& client, const PromptLibrary& prompts,
                              const RunConfig& config, long task_index);

}  // namespace skevo
