#include "skevo/parsing.hpp"

#include <algorithm>
#include <cctype>

#include "skevo/text.hpp"

namespace skevo {

namespace {

std::vector<std::string> lines_of(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == '\n') {
      lines.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return lines;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

// "key: value" with the key matched case-sensitively at line start.
std::optional<std::string> header_value(const std::string& line, std::string_view key) {
  auto trimmed = text::trim(line);
  std::string prefix = std::string(key) + ":";
  if (!starts_with(trimmed, prefix)) return std::nullopt;
  return text::trim(trimmed.substr(prefix.size()));
}

std::optional<BundleCase> parse_case_line(const std::string& line) {
  auto trimmed = text::trim(line);
  if (!starts_with(trimmed, "case:")) return std::nullopt;
  BundleCase c;
  bool have_kind = false;
  for (const auto& piece : text::split(trimmed.substr(5), '|')) {
    auto colon = piece.find(':');
    std::string key = colon == std::string::npos ? piece : text::trim(piece.substr(0, colon));
    std::string value = colon == std::string::npos ? "" : text::trim(piece.substr(colon + 1));
    if (!have_kind && colon == std::string::npos) {
      key = "kind";
      value = text::trim(piece);
    }
    if (key == "kind") {
      auto kind = parse_case_kind(value);
      if (!kind) return std::nullopt;
      c.kind = *kind;
      have_kind = true;
    } else if (key == "input") {
      c.input_fragment = value;
    } else if (key == "expect") {
      c.expected_behavior = value;
    } else if (key == "rule") {
      c.verdict_rule = value;
    }
  }
  if (!have_kind || c.input_fragment.empty()) return std::nullopt;
  return c;
}

}  // namespace

std::vector<ParsedCandidate> parse_skill_blocks(std::string_view response) {
  std::vector<ParsedCandidate> out;
  const auto lines = lines_of(response);
  std::size_t i = 0;
  while (i < lines.size()) {
    if (text::trim(lines[i]) != "SKILL") {
      ++i;
      continue;
    }
    ++i;
    ParsedCandidate candidate;
    bool in_body = false;
    bool closed = false;
    std::string body;
    for (; i < lines.size(); ++i) {
      const auto trimmed = text::trim(lines[i]);
      if (trimmed == "END SKILL") {
        closed = true;
        ++i;
        break;
      }
      if (in_body) {
        body += lines[i];
        body += "\n";
        continue;
      }
      if (auto v = header_value(lines[i], "name")) {
        candidate.skill.name = *v;
      } else if (auto v = header_value(lines[i], "semantics")) {
        if (auto sem = parse_semantics(*v)) candidate.skill.semantics = *sem;
      } else if (auto v = header_value(lines[i], "description")) {
        candidate.skill.description = *v;
      } else if (auto v = header_value(lines[i], "triggers")) {
        candidate.skill.triggers = text::split(*v, '|');
      } else if (auto v = header_value(lines[i], "tools")) {
        for (auto& t : text::split(*v, ',')) candidate.skill.tools.insert(t);
      } else if (auto v = header_value(lines[i], "domains")) {
        for (auto& d : text::split(*v, ',')) candidate.skill.domains.insert(d);
      } else if (header_value(lines[i], "body")) {
        auto inline_body = *header_value(lines[i], "body");
        if (!inline_body.empty()) body = inline_body + "\n";
        in_body = true;
      }
    }
    // Optional BUNDLE block immediately after the skill block.
    if (closed) {
      std::size_t j = i;
      while (j < lines.size() && text::trim(lines[j]).empty()) ++j;
      if (j < lines.size() && text::trim(lines[j]) == "BUNDLE") {
        ++j;
        for (; j < lines.size(); ++j) {
          if (text::trim(lines[j]) == "END BUNDLE") {
            ++j;
            break;
          }
          if (auto c = parse_case_line(lines[j])) candidate.bundle_cases.push_back(*c);
        }
        i = j;
      }
    }
    candidate.skill.body = text::trim(body);
    if (closed && !candidate.skill.name.empty() && !candidate.skill.body.empty()) {
      out.push_back(std::move(candidate));
    }
  }
  return out;
}

std::vector<ParsedCreditLine> parse_credit_lines(std::string_view response) {
  std::vector<ParsedCreditLine> out;
  for (const auto& line : lines_of(response)) {
    auto trimmed = text::trim(line);
    if (!starts_with(trimmed, "skill:")) continue;
    auto fields = text::split(trimmed.substr(6), ':');
    // "::" separators produce empty pieces that split() drops; re-split on
    // the literal "::" instead for robustness.
    fields.clear();
    std::string rest = text::trim(trimmed.substr(6));
    std::size_t pos = 0;
    while (true) {
      auto sep = rest.find("::", pos);
      if (sep == std::string::npos) {
        fields.push_back(text::trim(rest.substr(pos)));
        break;
      }
      fields.push_back(text::trim(rest.substr(pos, sep - pos)));
      pos = sep + 2;
    }
    if (fields.empty() || fields[0].empty()) continue;
    ParsedCreditLine parsed;
    parsed.target = fields[0];
    if (fields.size() < 2) continue;
    auto judgment = parse_judgment(text::to_lower(fields[1]));
    if (!judgment) continue;
    parsed.judgment = *judgment;
    if (fields.size() >= 3) parsed.rationale = fields[2];
    if (fields.size() >= 4) parsed.scope = fields[3];
    out.push_back(std::move(parsed));
  }
  return out;
}

std::optional<std::vector<std::string>> parse_meta_rules(std::string_view response) {
  const auto lines = lines_of(response);
  bool saw_analysis = false, saw_summary = false;
  std::optional<std::size_t> rules_at;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto trimmed = text::trim(lines[i]);
    if (starts_with(trimmed, "ANALYSIS:")) saw_analysis = true;
    if (starts_with(trimmed, "SUMMARY:")) saw_summary = true;
    if (starts_with(trimmed, "RULES:")) rules_at = i;
  }
  if (!saw_analysis || !saw_summary || !rules_at) return std::nullopt;
  std::vector<std::string> rules;
  for (std::size_t i = *rules_at + 1; i < lines.size(); ++i) {
    auto trimmed = text::trim(lines[i]);
    if (trimmed.empty()) continue;
    const bool bullet = trimmed[0] == '-' || trimmed[0] == '*' ||
                        std::isdigit(static_cast<unsigned char>(trimmed[0]));
    if (!bullet) break;
    auto rule = text::normalize_rule(trimmed);
    if (!rule.empty()) rules.push_back(std::move(rule));
  }
  if (rules.empty()) return std::nullopt;
  return rules;
}

std::optional<ParsedCall> parse_tool_call(std::string_view action_text) {
  // Find the first identifier immediately followed by '('.
  for (std::size_t i = 0; i < action_text.size(); ++i) {
    if (!(std::isalpha(static_cast<unsigned char>(action_text[i])) || action_text[i] == '_')) {
      continue;
    }
    std::size_t j = i;
    while (j < action_text.size() &&
           (std::isalnum(static_cast<unsigned char>(action_text[j])) || action_text[j] == '_')) {
      ++j;
    }
    if (j >= action_text.size() || action_text[j] != '(') {
      i = j;
      continue;
    }
    auto close = action_text.find(')', j);
    if (close == std::string_view::npos) return std::nullopt;
    ParsedCall call;
    call.name = std::string(action_text.substr(i, j - i));
    auto args_text = action_text.substr(j + 1, close - j - 1);
    for (const auto& piece : text::split(args_text, ',')) {
      auto eq = piece.find('=');
      if (eq == std::string::npos) continue;
      std::string key = text::trim(piece.substr(0, eq));
      std::string value = text::trim(piece.substr(eq + 1));
      // Strip surrounding quotes.
      if (value.size() >= 2 && (value.front() == '\'' || value.front() == '"') &&
          value.back() == value.front()) {
        value = value.substr(1, value.size() - 2);
      }
      if (!key.empty()) call.args.emplace_back(key, value);
    }
    return call;
  }
  return std::nullopt;
}

std::string render_call(const ParsedCall& call) {
  auto args = call.args;
  std::sort(args.begin(), args.end());
  std::string out = call.name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    out += args[i].first + "=" + args[i].second;
  }
  out += ")";
  return out;
}

ParsedVerdict parse_verdict(std::string_view response) {
  auto trimmed = text::trim(response);
  auto lower = text::to_lower(trimmed);
  ParsedVerdict v;
  if (starts_with(lower, "pass")) {
    v.verdict = Verdict::pass;
    return v;
  }
  if (starts_with(lower, "fail")) {
    v.verdict = Verdict::fail;
    auto colon = trimmed.find(':');
    v.detail = colon == std::string::npos ? "fail" : text::trim(trimmed.substr(colon + 1));
    return v;
  }
  v.verdict = Verdict::unparseable;
  v.detail = "unparseable verdict";
  return v;
}

std::string tool_family(std::string_view tool_name) {
  auto underscore = tool_name.find('_');
  if (underscore == std::string_view::npos) return std::string(tool_name);
  return std::string(tool_name.substr(0, underscore));
}

}  // namespace skevo
