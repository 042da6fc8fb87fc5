#include <algorithm>

#include "doctest.h"
#include "skevo/skill.hpp"

using namespace skevo;

namespace {

Skill workflow_skill() {
  Skill s;
  s.id = "sk-0001";
  s.version = 1;
  s.semantics = Semantics::workflow;
  s.name = "order-confirmation";
  s.description = "reuse the order id from the prior turn";
  s.trigger_conditions = {"confirm the latest order"};
  s.allowed_tools = {"get_order_details"};
  s.body = "After place_order returns an id, reuse it for the follow-up lookup.";
  s.source_role = Role::extractor;
  return s;
}

}  // namespace

TEST_CASE("validate_skill accepts a well-formed workflow skill") {
  auto report = validate_skill(workflow_skill());
  CHECK(report.ok());
  CHECK(report.violations.empty());
}

TEST_CASE("validate_skill requires a parent link for later versions") {
  auto s = workflow_skill();
  s.version = 2;
  auto report = validate_skill(s);
  REQUIRE_FALSE(report.ok());
  CHECK(std::find(report.violations.begin(), report.violations.end(),
                  "parent link required") != report.violations.end());
}

TEST_CASE("validate_skill flags an empty body") {
  auto s = workflow_skill();
  s.body.clear();
  auto report = validate_skill(s);
  REQUIRE_FALSE(report.ok());
  CHECK(std::find(report.violations.begin(), report.violations.end(), "body empty") !=
        report.violations.end());
}

TEST_CASE("validate_skill requires a parent for refiner output and forbids it otherwise") {
  auto s = workflow_skill();
  s.source_role = Role::refiner;
  CHECK_FALSE(validate_skill(s).ok());
  s.parent_id = "sk-0001@v1";
  s.version = 2;
  CHECK(validate_skill(s).ok());

  auto fresh = workflow_skill();
  fresh.parent_id = "sk-0000@v1";
  CHECK_FALSE(validate_skill(fresh).ok());
}

TEST_CASE("transition follows the legal table") {
  CHECK(transition(Stage::trial, LifecycleEvent::gate_pass) == Stage::active);
  CHECK(transition(Stage::trial, LifecycleEvent::gate_fail) == Stage::archived);
  CHECK(transition(Stage::trial, LifecycleEvent::superseded) == Stage::archived);
  CHECK(transition(Stage::active, LifecycleEvent::filter_disable) == Stage::disabled);
  CHECK(transition(Stage::active, LifecycleEvent::superseded) == Stage::archived);
  CHECK(transition(Stage::disabled, LifecycleEvent::retire) == Stage::archived);
}

TEST_CASE("archived is terminal") {
  CHECK_THROWS_AS(transition(Stage::archived, LifecycleEvent::gate_pass), IllegalTransition);
}

TEST_CASE("filter can only disable active skills") {
  CHECK(transition(Stage::active, LifecycleEvent::filter_disable) == Stage::disabled);
  CHECK_THROWS_AS(transition(Stage::trial, LifecycleEvent::filter_disable), IllegalTransition);
}

TEST_CASE("the transition function is total: every state/event pair is decided") {
  int legal = 0, illegal = 0;
  for (Stage state : kAllStages) {
    for (LifecycleEvent event : kAllEvents) {
      if (transition_allowed(state, event)) {
        ++legal;
        CHECK_NOTHROW(transition(state, event));
      } else {
        ++illegal;
        CHECK_THROWS_AS(transition(state, event), IllegalTransition);
      }
    }
  }
  CHECK(legal == 6);
  CHECK(illegal == 14);
  // disabled skills are never re-enabled by later evidence
  CHECK_FALSE(transition_allowed(Stage::disabled, LifecycleEvent::gate_pass));
}

TEST_CASE("random event walks never escape the state machine") {
  std::uint64_t rng = 0x9e3779b97f4a7c15ULL;
  auto next = [&rng]() {
    rng ^= rng << 13;
    rng ^= rng >> 7;
    rng ^= rng << 17;
    return rng;
  };
  for (int walk = 0; walk < 2000; ++walk) {
    Stage state = Stage::trial;
    for (int step = 0; step < 12; ++step) {
      const auto event = kAllEvents[next() % 5];
      if (!transition_allowed(state, event)) {
        CHECK_THROWS_AS(transition(state, event), IllegalTransition);
        continue;
      }
      state = transition(state, event);
    }
    const bool reachable = state == Stage::trial || state == Stage::active ||
                           state == Stage::disabled || state == Stage::archived;
    CHECK(reachable);
  }
}
