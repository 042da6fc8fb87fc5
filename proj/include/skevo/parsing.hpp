#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skevo/skill.hpp"

namespace skevo {

// Content fields of a skill as emitted by the extractor/refactorer/refiner
// oracles; identity fields (id, version, parent, source role) are assigned
// by the caller.
struct ParsedSkill {
  std::string name;
  std::string description;
  Semantics semantics = Semantics::knowledge;
  std::vector<std::string> triggers;
  std::set<std::string> tools;
  std::set<std::string> domains;
  std::string body;
};

struct ParsedCandidate {
  ParsedSkill skill;
  std::vector<BundleCase> bundle_cases;
};

// Parses SKILL ... END SKILL blocks with optional BUNDLE ... END BUNDLE
// blocks. Malformed blocks are skipped; "NO SKILL" yields an empty list.
std::vector<ParsedCandidate> parse_skill_blocks(std::string_view response);

struct ParsedCreditLine {
  std::string target;  // skill id, skill name, or "*"
  Judgment judgment = Judgment::uncertain;
  std::string rationale;
  std::string scope;
};

// Lines of the form "skill: <target> :: <judgment> :: <rationale> :: <scope>";
// the rationale and scope fields are optional.
std::vector<ParsedCreditLine> parse_credit_lines(std::string_view response);

// Meta responses must contain ANALYSIS, SUMMARY and RULES sections; rules
// are normalized single sentences. Returns nullopt when any section is
// missing or no rule parses.
std::optional<std::vector<std::string>> parse_meta_rules(std::string_view response);

struct ParsedCall {
  std::string name;
  std::vector<std::pair<std::string, std::string>> args;
};

// First name(arg=value, ...) call found in the text; nullopt when nothing
// parses. noop() parses like any call and is filtered by callers.
std::optional<ParsedCall> parse_tool_call(std::string_view action_text);

// Canonical form "name(a=1, b=2)" with arguments sorted by name; exact-match
// comparisons run on this rendering.
std::string render_call(const ParsedCall& call);

enum class Verdict { pass, fail, unparseable };
struct ParsedVerdict {
  Verdict verdict = Verdict::unparseable;
  std::string detail;
};
ParsedVerdict parse_verdict(std::string_view response);

std::string tool_family(std::string_view tool_name);  // prefix before first '_'

}  // namespace skevo
