#include "skevo/skill.hpp"

namespace skevo {

std::string to_string(Semantics s) {
  switch (s) {
    case Semantics::callable_function: return "callable_function";
    case Semantics::workflow: return "workflow";
    case Semantics::knowledge: return "knowledge";
  }
  return "knowledge";
}

std::string to_string(Role r) {
  switch (r) {
    case Role::extractor: return "extractor";
    case Role::refactorer: return "refactorer";
    case Role::refiner: return "refiner";
  }
  return "extractor";
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::trial: return "trial";
    case Stage::active: return "active";
    case Stage::disabled: return "disabled";
    case Stage::archived: return "archived";
  }
  return "archived";
}

std::string to_string(LifecycleEvent e) {
  switch (e) {
    case LifecycleEvent::gate_pass: return "gate_pass";
    case LifecycleEvent::gate_fail: return "gate_fail";
    case LifecycleEvent::filter_disable: return "filter_disable";
    case LifecycleEvent::superseded: return "superseded";
    case LifecycleEvent::retire: return "retire";
  }
  return "retire";
}

std::string to_string(Judgment j) {
  switch (j) {
    case Judgment::helpful: return "helpful";
    case Judgment::harmful: return "harmful";
    case Judgment::neutral: return "neutral";
    case Judgment::uncertain: return "uncertain";
  }
  return "uncertain";
}

std::string to_string(CaseKind k) {
  switch (k) {
    case CaseKind::unit: return "unit";
    case CaseKind::integration: return "integration";
    case CaseKind::negative: return "negative";
  }
  return "unit";
}

std::optional<Semantics> parse_semantics(const std::string& s) {
  if (s == "callable_function") return Semantics::callable_function;
  if (s == "workflow") return Semantics::workflow;
  if (s == "knowledge") return Semantics::knowledge;
  return std::nullopt;
}

std::optional<Role> parse_role(const std::string& s) {
  if (s == "extractor") return Role::extractor;
  if (s == "refactorer") return Role::refactorer;
  if (s == "refiner") return Role::refiner;
  return std::nullopt;
}

std::optional<Stage> parse_stage(const std::string& s) {
  if (s == "trial") return Stage::trial;
  if (s == "active") return Stage::active;
  if (s == "disabled") return Stage::disabled;
  if (s == "archived") return Stage::archived;
  return std::nullopt;
}

std::optional<Judgment> parse_judgment(const std::string& s) {
  if (s == "helpful") return Judgment::helpful;
  if (s == "harmful") return Judgment::harmful;
  if (s == "neutral") return Judgment::neutral;
  if (s == "uncertain") return Judgment::uncertain;
  return std::nullopt;
}

std::optional<CaseKind> parse_case_kind(const std::string& s) {
  if (s == "unit") return CaseKind::unit;
  if (s == "integration") return CaseKind::integration;
  if (s == "negative") return CaseKind::negative;
  return std::nullopt;
}

std::string Skill::version_ref() const {
  return id + "@v" + std::to_string(version);
}

ValidationReport validate_skill(const Skill& candidate) {
  ValidationReport report;
  if (candidate.version < 1) {
    report.violations.push_back("version must be >= 1");
  }
  const bool needs_parent =
      candidate.source_role == Role::refiner || candidate.version > 1;
  if (needs_parent && !candidate.parent_id.has_value()) {
    report.violations.push_back("parent link required");
  }
  if (!needs_parent && candidate.parent_id.has_value()) {
    report.violations.push_back("parent link forbidden for first-publish candidates");
  }
  if (candidate.body.empty()) {
    report.violations.push_back("body empty");
  }
  return report;
}

IllegalTransition::IllegalTransition(Stage f, LifecycleEvent e)
    : std::runtime_error("illegal_transition: " + skevo::to_string(f) + " + " +
                         skevo::to_string(e)),
      from(f),
      event(e) {}

bool transition_allowed(Stage state, LifecycleEvent event) {
  switch (state) {
    case Stage::trial:
      return event == LifecycleEvent::gate_pass || event == LifecycleEvent::gate_fail ||
             event == LifecycleEvent::superseded;
    case Stage::active:
      return event == LifecycleEvent::filter_disable ||
             event == LifecycleEvent::superseded;
    case Stage::disabled:
      return event == LifecycleEvent::retire;
    case Stage::archived:
      return false;
  }
  return false;
}

Stage transition(Stage state, LifecycleEvent event) {
  if (!transition_allowed(state, event)) throw IllegalTransition(state, event);
  switch (event) {
    case LifecycleEvent::gate_pass: return Stage::active;
    case LifecycleEvent::gate_fail: return Stage::archived;
    case LifecycleEvent::filter_disable: return Stage::disabled;
    case LifecycleEvent::superseded: return Stage::archived;
    case LifecycleEvent::retire: return Stage::archived;
  }
  throw IllegalTransition(state, event);
}

}  // namespace skevo
