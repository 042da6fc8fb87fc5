#include "doctest.h"
#include "skevo/parsing.hpp"
#include "skevo/roles.hpp"
#include "support/helpers.hpp"

using namespace skevo;
using namespace skevo::testing;

namespace {

Trace simple_trace() {
  Trace trace;
  trace.task_id = "task-1";
  TraceStep step;
  step.action = "call: vault_open(code=AC-1)";
  step.observation = "the access code is AC-1; unit open";
  trace.steps.push_back(step);
  return trace;
}

std::string skill_response(const std::string& name) {
  return "SKILL\nname: " + name +
         "\nsemantics: workflow\ndescription: d\ntriggers: open the unit\n"
         "tools: vault_open\nbody:\nuse code AC-1\nEND SKILL\n";
}

EvidenceState evidence_with_exposures(long exposures) {
  EvidenceState e;
  e.usage.exposed_count = exposures;
  return e;
}

const std::string kMetaResponse =
    "ANALYSIS: constants carried in bodies helped\n"
    "SUMMARY: keep constants explicit\n"
    "RULES:\n- Record exact constants in the body.\n- Require two traces of evidence.\n";

}  // namespace

TEST_CASE("extract: three distinct samples yield three candidates") {
  ScriptedBackend backend;
  backend.push_tape(RoleTag::extractor, skill_response("alpha"));
  backend.push_tape(RoleTag::extractor, skill_response("beta"));
  backend.push_tape(RoleTag::extractor, skill_response("gamma"));
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;  // extractor_samples = 3
  auto candidates = extract(simple_trace(), Utility{}, MetaRuleSet{}, client,
                            prompt_library(), config, 4);
  REQUIRE(candidates.size() == 3);
  CHECK(candidates[0].skill.source_role == Role::extractor);
  CHECK(candidates[0].skill.created_at_task == 4);
  CHECK(candidates[0].skill.version == 1);
  CHECK_FALSE(candidates[0].skill.parent_id.has_value());
}

TEST_CASE("extract merges duplicate candidates by name and trigger digest") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::extractor, skill_response("alpha"));
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  auto candidates = extract(simple_trace(), Utility{}, MetaRuleSet{}, client,
                            prompt_library(), config, 0);
  CHECK(candidates.size() == 1);
  CHECK(log.records().size() == 3);  // three samples were still drawn
}

TEST_CASE("extract: unparseable samples produce no candidates and never throw") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::extractor, "NO SKILL");
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  CHECK(extract(simple_trace(), Utility{}, MetaRuleSet{}, client, prompt_library(), config, 0)
            .empty());

  ScriptedBackend failing(true);  // strict empty tape
  CallLog log2;
  ChatClient client2(failing, log2);
  CHECK(extract(simple_trace(), Utility{}, MetaRuleSet{}, client2, prompt_library(), config,
                0)
            .empty());
}

TEST_CASE("extract injects the current meta rules verbatim") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::extractor, "NO SKILL");
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  MetaRuleSet rules;
  rules.role = Role::extractor;
  rules.rules = {"Record exact protocol constants.", "Reject stylistic preferences."};
  extract(simple_trace(), Utility{}, rules, client, prompt_library(), config, 0);
  for (const auto& record : log.records()) {
    for (const auto& rule : rules.rules) {
      CHECK(record.prompt.find(rule) != std::string::npos);
    }
  }
}

namespace {

OverlapGraph shared_tool_graph(RunConfig& config) {
  OverlapGraph graph;
  std::vector<Segment> segments;
  for (int i = 0; i < 3; ++i) {
    Segment seg;
    seg.id = "t" + std::to_string(i % 2) + "#" + std::to_string(i) + "-" + std::to_string(i);
    seg.source_task_id = "t" + std::to_string(i % 2);
    seg.fragment_text = "open the unit with the shared code then seal it";
    seg.tool_calls = {"vault_open(code=AC-1)"};
    segments.push_back(seg);
  }
  update_graph(graph, segments, {}, config, default_embedder());
  return graph;
}

}  // namespace

TEST_CASE("refactor: a shared-tool group yields one supported workflow skill") {
  RunConfig config;
  auto graph = shared_tool_graph(config);
  auto groups = find_candidate_groups(graph, config, default_embedder(), -1);
  REQUIRE(groups.size() == 1);

  ScriptedBackend backend;
  backend.set_default_response(RoleTag::refactorer, skill_response("vault-open-workflow"));
  CallLog log;
  ChatClient client(backend, log);
  auto candidates = refactor(groups[0], graph, MetaRuleSet{}, client, prompt_library(),
                             config, 9);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].skill.source_role == Role::refactorer);
  CHECK(candidates[0].skill.allowed_tools.count("vault_open") == 1);
  CHECK(log.records().size() == 1);  // one oracle call per group
}

TEST_CASE("refactor rejects a candidate declaring a tool absent from one member") {
  RunConfig config;
  auto graph = shared_tool_graph(config);
  auto groups = find_candidate_groups(graph, config, default_embedder(), -1);
  REQUIRE(groups.size() == 1);

  ScriptedBackend backend;
  backend.set_default_response(
      RoleTag::refactorer,
      "SKILL\nname: bad\nsemantics: workflow\ndescription: d\n"
      "triggers: zzz unrelated zzz\ntools: missing_tool\nbody:\nbody\nEND SKILL\n");
  CallLog log;
  ChatClient client(backend, log);
  CHECK(refactor(groups[0], graph, MetaRuleSet{}, client, prompt_library(), config, 9)
            .empty());
}

TEST_CASE("refactor on an empty group is a precondition violation") {
  RunConfig config;
  OverlapGraph graph;
  ScriptedBackend backend;
  CallLog log;
  ChatClient client(backend, log);
  CHECK_THROWS_AS(refactor(CandidateGroup{}, graph, MetaRuleSet{}, client, prompt_library(),
                           config, 0),
                  std::invalid_argument);
}

TEST_CASE("record_outcome marks maturity at the exposure threshold and upserts") {
  RunConfig config;  // maturity_min_exposures = 3
  std::vector<ReplayRow> buffer;
  auto skill = make_skill("alpha");
  skill.id = "sk-1";

  record_outcome(buffer, skill, evidence_with_exposures(0), config, 1);
  REQUIRE(buffer.size() == 1);
  CHECK_FALSE(buffer[0].mature);

  record_outcome(buffer, skill, evidence_with_exposures(3), config, 2);
  REQUIRE(buffer.size() == 1);  // upsert, not append
  CHECK(buffer[0].mature);
  CHECK(buffer[0].recorded_at_task == 2);
}

TEST_CASE("update_role_rules: an empty buffer makes no oracle call") {
  ScriptedBackend backend(true);
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  MetaRuleSet rules;
  rules.rules = {"existing rule"};
  auto updated = update_role_rules(Role::extractor, rules, {}, 20, client, prompt_library(),
                                   config, 5);
  CHECK(updated.rules == rules.rules);
  CHECK(log.records().empty());
}

TEST_CASE("update_role_rules: unparseable responses leave the rules byte-identical") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::meta, "no update");
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  MetaRuleSet rules;
  rules.rules = {"first rule", "second rule"};
  std::vector<ReplayRow> buffer;
  record_outcome(buffer, [] {
    auto s = make_skill("alpha");
    s.id = "sk-1";
    return s;
  }(), evidence_with_exposures(5), config, 1);
  auto updated = update_role_rules(Role::extractor, rules, buffer, 20, client,
                                   prompt_library(), config, 5);
  CHECK(updated.rules == rules.rules);
  CHECK(log.records().size() == 1);
}

TEST_CASE("update_role_rules truncates to five rules") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::meta,
                               "ANALYSIS: a\nSUMMARY: b\nRULES:\n- r1\n- r2\n- r3\n- r4\n- "
                               "r5\n- r6\n- r7\n");
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  std::vector<ReplayRow> buffer;
  record_outcome(buffer, [] {
    auto s = make_skill("alpha");
    s.id = "sk-1";
    return s;
  }(), evidence_with_exposures(4), config, 1);
  auto updated = update_role_rules(Role::refiner, MetaRuleSet{}, buffer, 20, client,
                                   prompt_library(), config, 5);
  REQUIRE(updated.rules.size() == 5);
  CHECK(updated.rules[0] == "r1");
  CHECK(updated.rules[4] == "r5");
  CHECK(updated.role == Role::refiner);
}

TEST_CASE("update_role_rules: immature-only buffers behave like empty ones") {
  ScriptedBackend backend(true);
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  std::vector<ReplayRow> buffer;
  record_outcome(buffer, [] {
    auto s = make_skill("alpha");
    s.id = "sk-1";
    return s;
  }(), evidence_with_exposures(1), config, 1);
  auto updated = update_role_rules(Role::extractor, MetaRuleSet{}, buffer, 20, client,
                                   prompt_library(), config, 5);
  CHECK(updated.rules.empty());
  CHECK(log.records().empty());
}

TEST_CASE("update_role_rules accepts a parseable response and normalizes rules") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::meta, kMetaResponse);
  CallLog log;
  ChatClient client(backend, log);
  RunConfig config;
  std::vector<ReplayRow> buffer;
  for (int i = 0; i < 4; ++i) {
    auto s = make_skill("skill-" + std::to_string(i));
    s.id = "sk-" + std::to_string(i);
    record_outcome(buffer, s, evidence_with_exposures(3 + i), config, i);
  }
  auto updated = update_role_rules(Role::extractor, MetaRuleSet{}, buffer,
                                   2 /* sample subset */, client, prompt_library(), config, 9);
  REQUIRE(updated.rules.size() == 2);
  CHECK(updated.rules[0] == "Record exact constants in the body.");
  CHECK(updated.updated_at_task == 9);
}

TEST_CASE("rule normalization strips numbering and enforces one sentence") {
  CHECK(text::normalize_rule("  3)  Keep it   short. And drop this tail.") ==
        "Keep it short.");
  CHECK(text::normalize_rule("- bullet rule") == "bullet rule");
  CHECK(text::normalize_rule("12. numbered") == "numbered");
}

TEST_CASE("meta parsing requires all three sections") {
  CHECK_FALSE(parse_meta_rules("RULES:\n- lonely rule").has_value());
  CHECK_FALSE(parse_meta_rules("ANALYSIS: a\nSUMMARY: b\n").has_value());
  auto rules = parse_meta_rules(kMetaResponse);
  REQUIRE(rules.has_value());
  CHECK(rules->size() == 2);
}
