#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace skevo {

enum class Semantics { callable_function, workflow, knowledge };
enum class Role { extractor, refactorer, refiner };
enum class Stage { trial, active, disabled, archived };
enum class LifecycleEvent { gate_pass, gate_fail, filter_disable, superseded, retire };
enum class Judgment { helpful, harmful, neutral, uncertain };
enum class CaseKind { unit, integration, negative };

std::string to_string(Semantics s);
std::string to_string(Role r);
std::string to_string(Stage s);
std::string to_string(LifecycleEvent e);
std::string to_string(Judgment j);
std::string to_string(CaseKind k);

std::optional<Semantics> parse_semantics(const std::string& s);
std::optional<Role> parse_role(const std::string& s);
std::optional<Stage> parse_stage(const std::string& s);
std::optional<Judgment> parse_judgment(const std::string& s);
std::optional<CaseKind> parse_case_kind(const std::string& s);

inline constexpr Role kAllRoles[] = {Role::extractor, Role::refactorer, Role::refiner};
inline constexpr Stage kAllStages[] = {Stage::trial, Stage::active, Stage::disabled,
                                       Stage::archived};
inline constexpr LifecycleEvent kAllEvents[] = {
    LifecycleEvent::gate_pass, LifecycleEvent::gate_fail, LifecycleEvent::filter_disable,
    LifecycleEvent::superseded, LifecycleEvent::retire};

// Reusable textual artifact injected into the executor's context. The id is
// a content-independent string assigned at first publish; versions share it.
struct Skill {
  std::string id;
  int version = 1;
  std::optional<std::string> parent_id;
  Semantics semantics = Semantics::knowledge;
  std::string name;
  std::string description;
  std::vector<std::string> trigger_conditions;
  std::set<std::string> allowed_tools;
  std::set<std::string> domains;
  std::string body;
  Role source_role = Role::extractor;
  int created_at_task = 0;

  std::string version_ref() const;  // "id@vN"
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Reports every violated invariant; never throws.
ValidationReport validate_skill(const Skill& candidate);

struct IllegalTransition : std::runtime_error {
  IllegalTransition(Stage from, LifecycleEvent event);
  Stage from;
  LifecycleEvent event;
};

// Lifecycle state machine. Legal pairs:
//   trial    + gate_pass      -> active
//   trial    + gate_fail      -> archived
//   trial    + superseded     -> archived   (released revision replaces a trial)
//   active   + filter_disable -> disabled
//   active   + superseded     -> archived
//   disabled + retire         -> archived
// Everything else throws IllegalTransition; archived is terminal.
Stage transition(Stage state, LifecycleEvent event);
bool transition_allowed(Stage state, LifecycleEvent event);

struct BundleCase {
  CaseKind kind = CaseKind::unit;
  std::string input_fragment;
  std::string expected_behavior;
  std::string verdict_rule;
};

// Unit/integration/negative cases attached to one skill version. May be
// empty only for knowledge-semantics skills.
struct TestBundle {
  std::string skill_id;
  int skill_version = 1;
  std::vector<BundleCase> cases;
};

struct CreditEvent {
  std::string skill_id;
  int skill_version = 1;
  std::string task_id;
  Judgment judgment = Judgment::uncertain;
  std::string rationale;
  std::string attribution_scope;  // quoted trace fragment
};

struct UsageStats {
  long retrieved_count = 0;  // turns where retrieval returned the skill
  long executed_count = 0;   // tasks where a declared tool was actually called
  long exposed_count = 0;    // tasks where the skill was rendered into the prompt
};

struct EvidenceState {
  TestBundle bundle;
  std::vector<CreditEvent> credits;
  UsageStats usage;
};

inline constexpr int kMaxMetaRules = 5;

struct MetaRuleSet {
  Role role = Role::extractor;
  std::vector<std::string> rules;  // at most kMaxMetaRules normalized sentences
  int updated_at_task = 0;
};

}  // namespace skevo
