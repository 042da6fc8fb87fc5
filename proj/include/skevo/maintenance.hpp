#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skevo/config.hpp"
#include "skevo/oracle.hpp"
#include "skevo/prompts.hpp"
#include "skevo/retrieval.hpp"
#include "skevo/skill.hpp"
#include "skevo/trace.hpp"

namespace skevo {

struct CreditCounters {
  long helpful = 0;
  long harmful = 0;
  long neutral = 0;
  long uncertain = 0;
  long exposed = 0;
  long executed = 0;
  long retrieved = 0;

  bool operator==(const CreditCounters&) const = default;
};

// Per skill-version judgment and usage counters; h_s and p_s of the filter
// gate read the harmful/helpful columns.
class CreditTable {
 public:
  using Key = std::pair<std::string, int>;

  CreditCounters& row(const std::string& id, int version);
  const CreditCounters* find(const std::string& id, int version) const;
  const std::map<Key, CreditCounters>& rows() const { return rows_; }

  bool operator==(const CreditTable&) const = default;

 private:
  std::map<Key, CreditCounters> rows_;
};

struct GateResult {
  struct CaseResult {
    std::string case_digest;
    bool passed = false;
    std::string detail;
  };
  bool passed = false;
  std::vector<CaseResult> case_results;
  std::string failure_digest;
};

// One event per exposed skill; judgments parsed from the oracle response,
// unparseable ones become uncertain, and oracle failure past the retry
// budget degrades every event to uncertain.
std::vector<CreditEvent> assign_credit(const Trace& trace, const Utility& utility,
                                       const std::vector<SkillRetrievalView>& exposed,
                                       ChatClient& client, const PromptLibrary& prompts,
                                       const RunConfig& config);

// Pure counter accumulation: commutative and associative over event multisets.
void update_credit_table(CreditTable& table, const std::vector<CreditEvent>& events);

// Filter(s) = h_s >= tau AND p_s < tau_p.
bool filter_gate(long harmful, long helpful, long tau, long tau_protect);

// Gate(s): every case judged by the verdict oracle; an empty bundle passes
// vacuously for knowledge skills and fails otherwise. Oracle failure is a
// conservative gate fail.
GateResult run_bundle(const Skill& skill, const TestBundle& bundle, ChatClient& client,
                      const PromptLibrary& prompts, const RunConfig& config);

// Appends at most one case derived from the event's attribution scope;
// duplicate inputs are dropped and the bundle is capped, evicting the oldest
// unit cases first.
TestBundle patch_bundle(TestBundle bundle, const CreditEvent& event, const RunConfig& config);
TestBundle patch_bundle_from_failure(TestBundle bundle, const GateResult& failure,
                                     const RunConfig& config);

struct RefinedCandidate {
  Skill skill;
  TestBundle bundle;
};

// One candidate revision parsed from the refiner oracle; the meta rules are
// injected verbatim into the role prompt. Unparseable output after the
// retry budget leaves the skill untouched (returns nullopt). Refining a
// skill that is not trial or active is a precondition violation.
std::optional<RefinedCandidate> refine(const Skill& skill, Stage stage,
                                       const EvidenceState& evidence, const MetaRuleSet& rules,
                                       ChatClient& client, const PromptLibrary& prompts,
                                       const RunConfig& config);

std::string render_rules(const MetaRuleSet& rules);
std::string render_evidence_digest(const Skill& skill, const EvidenceState& evidence,
                                   const RunConfig& config);

}  // namespace skevo
