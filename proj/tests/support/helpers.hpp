#pragma once

#include <string>

#include "skevo/maintenance.hpp"
#include "skevo/prompts.hpp"
#include "skevo/skill.hpp"
#include "skevo/store.hpp"

namespace skevo::testing {

inline const PromptLibrary& prompt_library() {
  static PromptLibrary lib = PromptLibrary::load(default_template_dir());
  return lib;
}

inline Skill make_skill(const std::string& name, Semantics semantics = Semantics::workflow,
                        const std::string& body = "default body text for the skill") {
  Skill s;
  s.version = 1;
  s.semantics = semantics;
  s.name = name;
  s.description = "description of " + name;
  s.trigger_conditions = {"use " + name};
  s.body = body;
  s.source_role = Role::extractor;
  return s;
}

inline TestBundle make_bundle(int cases = 1) {
  TestBundle bundle;
  for (int i = 0; i < cases; ++i) {
    BundleCase c;
    c.kind = CaseKind::unit;
    c.input_fragment = "input fragment " + std::to_string(i);
    c.expected_behavior = "behaves as declared";
    c.verdict_rule = "judge directly";
    bundle.cases.push_back(std::move(c));
  }
  return bundle;
}

inline GateResult passing_gate() {
  GateResult gate;
  gate.passed = true;
  return gate;
}

inline GateResult failing_gate(const std::string& digest = "case failed") {
  GateResult gate;
  gate.passed = false;
  gate.failure_digest = digest;
  return gate;
}

// Simple deterministic generator for property tests.
struct TestRng {
  std::uint64_t state;
  explicit TestRng(std::uint64_t seed) : state(seed ^ 0x9e3779b97f4a7c15ULL) {}
  std::uint64_t next() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  bool chance(int percent) { return below(100) < percent; }
};

}  // namespace skevo::testing
