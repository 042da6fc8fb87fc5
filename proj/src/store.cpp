#include "skevo/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "skevo/text.hpp"

namespace skevo {

using nlohmann::json;

namespace {

json skill_to_json(const SkillVersion& record) {
  const Skill& s = record.skill;
  json j;
  j["id"] = s.id;
  j["version"] = s.version;
  if (s.parent_id) j["parent_id"] = *s.parent_id;
  j["semantics"] = to_string(s.semantics);
  j["name"] = s.name;
  j["description"] = s.description;
  j["trigger_conditions"] = s.trigger_conditions;
  j["allowed_tools"] = std::vector<std::string>(s.allowed_tools.begin(), s.allowed_tools.end());
  j["domains"] = std::vector<std::string>(s.domains.begin(), s.domains.end());
  j["body"] = s.body;
  j["source_role"] = to_string(s.source_role);
  j["created_at_task"] = s.created_at_task;
  j["stage"] = to_string(record.stage);
  j["gate_passed"] = record.gate_passed;
  j["gate_failure"] = record.gate_failure;
  return j;
}

SkillVersion skill_from_json(const json& j) {
  SkillVersion record;
  Skill& s = record.skill;
  s.id = j.at("id").get<std::string>();
  s.version = j.at("version").get<int>();
  if (j.contains("parent_id")) s.parent_id = j.at("parent_id").get<std::string>();
  s.semantics = parse_semantics(j.at("semantics").get<std::string>()).value();
  s.name = j.at("name").get<std::string>();
  s.description = j.at("description").get<std::string>();
  s.trigger_conditions = j.at("trigger_conditions").get<std::vector<std::string>>();
  for (const auto& t : j.at("allowed_tools")) s.allowed_tools.insert(t.get<std::string>());
  for (const auto& d : j.at("domains")) s.domains.insert(d.get<std::string>());
  s.body = j.at("body").get<std::string>();
  s.source_role = parse_role(j.at("source_role").get<std::string>()).value();
  s.created_at_task = j.at("created_at_task").get<int>();
  record.stage = parse_stage(j.at("stage").get<std::string>()).value();
  record.gate_passed = j.at("gate_passed").get<bool>();
  record.gate_failure = j.at("gate_failure").get<std::string>();
  return record;
}

json bundle_to_json(const TestBundle& bundle) {
  json j;
  j["skill_id"] = bundle.skill_id;
  j["skill_version"] = bundle.skill_version;
  auto cases = json::array();
  for (const auto& c : bundle.cases) {
    cases.push_back({{"kind", to_string(c.kind)},
                     {"input_fragment", c.input_fragment},
                     {"expected_behavior", c.expected_behavior},
                     {"verdict_rule", c.verdict_rule}});
  }
  j["cases"] = cases;
  return j;
}

TestBundle bundle_from_json(const json& j) {
  TestBundle bundle;
  bundle.skill_id = j.at("skill_id").get<std::string>();
  bundle.skill_version = j.at("skill_version").get<int>();
  for (const auto& c : j.at("cases")) {
    BundleCase parsed;
    parsed.kind = parse_case_kind(c.at("kind").get<std::string>()).value();
    parsed.input_fragment = c.at("input_fragment").get<std::string>();
    parsed.expected_behavior = c.at("expected_behavior").get<std::string>();
    parsed.verdict_rule = c.at("verdict_rule").get<std::string>();
    bundle.cases.push_back(std::move(parsed));
  }
  return bundle;
}

json credit_event_to_json(const CreditEvent& e) {
  return json{{"skill_id", e.skill_id},
              {"skill_version", e.skill_version},
              {"task_id", e.task_id},
              {"judgment", to_string(e.judgment)},
              {"rationale", e.rationale},
              {"attribution_scope", e.attribution_scope}};
}

CreditEvent credit_event_from_json(const json& j) {
  CreditEvent e;
  e.skill_id = j.at("skill_id").get<std::string>();
  e.skill_version = j.at("skill_version").get<int>();
  e.task_id = j.at("task_id").get<std::string>();
  e.judgment = parse_judgment(j.at("judgment").get<std::string>()).value();
  e.rationale = j.at("rationale").get<std::string>();
  e.attribution_scope = j.at("attribution_scope").get<std::string>();
  return e;
}

json usage_to_json(const UsageStats& u) {
  return json{{"retrieved_count", u.retrieved_count},
              {"executed_count", u.executed_count},
              {"exposed_count", u.exposed_count}};
}

UsageStats usage_from_json(const json& j) {
  UsageStats u;
  u.retrieved_count = j.at("retrieved_count").get<long>();
  u.executed_count = j.at("executed_count").get<long>();
  u.exposed_count = j.at("exposed_count").get<long>();
  return u;
}

// Ledger files are one compact JSON record per line plus a checksum trailer.
std::string with_checksum_trailer(const std::string& body) {
  return body + "#fnv64:" + text::fnv1a64_hex(body) + "\n";
}

// Verifies and strips the trailer; throws CorruptRepository on mismatch.
std::string strip_checksum_trailer(const std::string& content, const std::string& path) {
  auto trailer_at = content.rfind("#fnv64:");
  if (trailer_at == std::string::npos) {
    throw CorruptRepository("corrupt_repository: missing checksum trailer in " + path);
  }
  const std::string body = content.substr(0, trailer_at);
  const std::string expected = text::fnv1a64_hex(body);
  const std::string found = text::trim(content.substr(trailer_at + 7));
  if (found != expected) {
    throw CorruptRepository("corrupt_repository: checksum mismatch in " + path);
  }
  return body;
}

std::string version_file(int version, const char* suffix) {
  return "v" + std::to_string(version) + suffix;
}

}  // namespace

void GraphCodec::load(OverlapGraph& graph, const std::string& json_text) {
  auto j = json::parse(json_text);
  graph.clear();
  for (const auto& n : j.at("nodes")) {
    GraphNode node;
    node.id = n.at("id").get<std::string>();
    node.kind = n.at("kind").get<std::string>() == "segment" ? NodeKind::segment
                                                             : NodeKind::skill_summary;
    node.text = n.at("text").get<std::string>();
    node.tool_calls = n.at("tool_calls").get<std::vector<std::string>>();
    node.error_texts = n.at("error_texts").get<std::vector<std::string>>();
    node.provenance = n.at("provenance").get<std::string>();
    node.task_ordinal = n.at("task_ordinal").get<long>();
    graph.nodes_[node.id] = std::move(node);
  }
  for (const auto& e : j.at("edges")) {
    graph.edges_[{e.at("u").get<std::string>(), e.at("v").get<std::string>()}] =
        std::stod(e.at("w").get<std::string>());
  }
  graph.task_counter_ = j.at("task_counter").get<long>();
}

std::string config_to_json_text(const RunConfig& c) {
  json j;
  j["retrieval_k"] = c.retrieval_k;
  j["lambda_sparse"] = text::format_fixed(c.lambda_sparse, 6);
  j["lambda_emb"] = text::format_fixed(c.lambda_emb, 6);
  j["lambda_tool"] = text::format_fixed(c.lambda_tool, 6);
  j["lambda_trust"] = text::format_fixed(c.lambda_trust, 6);
  j["k_micro"] = c.k_micro;
  j["k_macro"] = c.k_macro;
  j["extractor_samples"] = c.extractor_samples;
  j["retry_budget"] = c.retry_budget;
  j["tau_filter"] = c.tau_filter;
  j["tau_protect"] = c.tau_protect;
  j["alpha"] = text::format_fixed(c.alpha, 6);
  j["beta"] = text::format_fixed(c.beta, 6);
  j["gamma"] = text::format_fixed(c.gamma, 6);
  j["eta"] = text::format_fixed(c.eta, 6);
  j["clique_min"] = c.clique_min;
  j["clique_max"] = c.clique_max;
  j["max_candidate_groups"] = c.max_candidate_groups;
  j["segment_window_tasks"] = c.segment_window_tasks;
  j["buffer_sample_n"] = c.buffer_sample_n;
  j["maturity_min_exposures"] = c.maturity_min_exposures;
  j["bundle_case_cap"] = c.bundle_case_cap;
  j["max_rounds"] = c.max_rounds;
  j["seed"] = c.seed;
  j["trace_slot_limit"] = c.trace_slot_limit;
  j["body_slot_limit"] = c.body_slot_limit;
  j["evidence_slot_limit"] = c.evidence_slot_limit;
  j["query_digest_limit"] = c.query_digest_limit;
  j["fragment_limit"] = c.fragment_limit;
  j["template_dir"] = c.template_dir;
  return j.dump(1) + "\n";
}

RunConfig config_from_json_text(const std::string& json_text) {
  auto j = json::parse(json_text);
  RunConfig c;
  auto get_int = [&](const char* key, int dflt) { return j.value(key, dflt); };
  auto get_long = [&](const char* key, long dflt) { return j.value(key, dflt); };
  auto get_double = [&](const char* key, double dflt) {
    if (!j.contains(key)) return dflt;
    if (j.at(key).is_string()) return std::stod(j.at(key).get<std::string>());
    return j.at(key).get<double>();
  };
  c.retrieval_k = get_int("retrieval_k", c.retrieval_k);
  c.lambda_sparse = get_double("lambda_sparse", c.lambda_sparse);
  c.lambda_emb = get_double("lambda_emb", c.lambda_emb);
  c.lambda_tool = get_double("lambda_tool", c.lambda_tool);
  c.lambda_trust = get_double("lambda_trust", c.lambda_trust);
  c.k_micro = get_int("k_micro", c.k_micro);
  c.k_macro = get_int("k_macro", c.k_macro);
  c.extractor_samples = get_int("extractor_samples", c.extractor_samples);
  c.retry_budget = get_int("retry_budget", c.retry_budget);
  c.tau_filter = get_long("tau_filter", c.tau_filter);
  c.tau_protect = get_long("tau_protect", c.tau_protect);
  c.alpha = get_double("alpha", c.alpha);
  c.beta = get_double("beta", c.beta);
  c.gamma = get_double("gamma", c.gamma);
  c.eta = get_double("eta", c.eta);
  c.clique_min = get_int("clique_min", c.clique_min);
  c.clique_max = get_int("clique_max", c.clique_max);
  c.max_candidate_groups = get_int("max_candidate_groups", c.max_candidate_groups);
  c.segment_window_tasks = get_int("segment_window_tasks", c.segment_window_tasks);
  c.buffer_sample_n = get_int("buffer_sample_n", c.buffer_sample_n);
  c.maturity_min_exposures = get_int("maturity_min_exposures", c.maturity_min_exposures);
  c.bundle_case_cap = get_int("bundle_case_cap", c.bundle_case_cap);
  c.max_rounds = get_int("max_rounds", c.max_rounds);
  c.seed = j.value("seed", c.seed);
  c.trace_slot_limit = get_int("trace_slot_limit", c.trace_slot_limit);
  c.body_slot_limit = get_int("body_slot_limit", c.body_slot_limit);
  c.evidence_slot_limit = get_int("evidence_slot_limit", c.evidence_slot_limit);
  c.query_digest_limit = get_int("query_digest_limit", c.query_digest_limit);
  c.fragment_limit = get_int("fragment_limit", c.fragment_limit);
  c.template_dir = j.value("template_dir", c.template_dir);
  return c;
}

Repository::PublishResult Repository::publish(Skill candidate, TestBundle bundle,
                                              const GateResult& gate,
                                              const std::string& task_id) {
  auto report = validate_skill(candidate);
  if (!report.ok()) {
    throw InvalidCandidate("invalid_candidate: " + text::join(report.violations, "; "));
  }
  if (candidate.version != 1) {
    throw InvalidCandidate("invalid_candidate: publish expects version 1, got " +
                           std::to_string(candidate.version));
  }
  if (candidate.id.empty()) {
    candidate.id = allocate_id();
  } else if (skills_.count(candidate.id)) {
    throw DuplicateVersion("duplicate_version: id " + candidate.id + " already published");
  }

  PublishResult result;
  result.id = candidate.id;
  result.version = 1;
  result.stage = gate.passed ? Stage::trial : Stage::archived;

  bundle.skill_id = candidate.id;
  bundle.skill_version = 1;

  SkillVersion record;
  record.skill = std::move(candidate);
  record.stage = result.stage;
  record.gate_passed = gate.passed;
  record.gate_failure = gate.failure_digest;
  skills_[result.id].push_back(std::move(record));
  bundles_[{result.id, 1}] = std::move(bundle);
  credits_[result.id] = {};
  usage_[result.id] = {};

  lifecycle_ledger_.push_back({next_ordinal(), "publish", result.id, 1, gate.passed,
                               gate.passed ? "stored trial" : "gate fail: " + gate.failure_digest,
                               task_id});
  return result;
}

int Repository::revise(const std::string& skill_id, Skill new_version, TestBundle new_bundle,
                       const GateResult& gate, const std::string& task_id) {
  auto it = skills_.find(skill_id);
  if (it == skills_.end()) {
    throw UnknownSkill("unknown_skill: " + skill_id);
  }
  SkillVersion* cur = nullptr;
  for (auto& record : it->second) {
    if (record.stage != Stage::archived) cur = &record;
  }
  if (!cur) {
    throw IllegalState("illegal_state: every version of " + skill_id + " is archived");
  }
  if (cur->stage == Stage::disabled) {
    throw IllegalState("illegal_state: " + skill_id + " is disabled");
  }

  new_version.id = skill_id;
  // Failed revisions consume version numbers too, so count from the tail.
  new_version.version = it->second.back().skill.version + 1;
  if (!new_version.parent_id) new_version.parent_id = cur->skill.version_ref();
  auto report = validate_skill(new_version);
  if (!report.ok()) {
    throw InvalidCandidate("invalid_candidate: " + text::join(report.violations, "; "));
  }
  const int version = new_version.version;
  new_bundle.skill_id = skill_id;
  new_bundle.skill_version = version;

  if (gate.passed) {
    const Stage inherited = cur->stage;
    cur->stage = transition(cur->stage, LifecycleEvent::superseded);
    lifecycle_ledger_.push_back({next_ordinal(), "transition", skill_id, cur->skill.version,
                                 cur->gate_passed, "superseded", task_id});
    SkillVersion record;
    record.skill = std::move(new_version);
    record.stage = inherited;
    record.gate_passed = true;
    skills_[skill_id].push_back(std::move(record));
    bundles_[{skill_id, version}] = std::move(new_bundle);
    credits_[skill_id].clear();  // fresh counters for the released revision
    usage_[skill_id] = {};
    lifecycle_ledger_.push_back({next_ordinal(), "revise", skill_id, version, true,
                                 "released; parent=" + *skills_[skill_id].back().skill.parent_id,
                                 task_id});
  } else {
    SkillVersion record;
    record.skill = std::move(new_version);
    record.stage = Stage::archived;
    record.gate_passed = false;
    record.gate_failure = gate.failure_digest;
    skills_[skill_id].push_back(std::move(record));
    bundles_[{skill_id, version}] = std::move(new_bundle);
    lifecycle_ledger_.push_back({next_ordinal(), "revise", skill_id, version, false,
                                 "gate fail: " + gate.failure_digest, task_id});
  }
  return version;
}

void Repository::apply_transition(const std::string& skill_id, int version,
                                  LifecycleEvent event, const std::string& task_id,
                                  const std::string& detail) {
  auto it = skills_.find(skill_id);
  if (it == skills_.end()) throw UnknownSkill("unknown_skill: " + skill_id);
  for (auto& record : it->second) {
    if (record.skill.version == version) {
      record.stage = transition(record.stage, event);
      lifecycle_ledger_.push_back({next_ordinal(), "transition", skill_id, version,
                                   record.gate_passed, to_string(event) + " " + detail,
                                   task_id});
      return;
    }
  }
  throw UnknownSkill("unknown_skill: " + skill_id + "@v" + std::to_string(version));
}

const SkillVersion* Repository::find_version(const std::string& id, int version) const {
  auto it = skills_.find(id);
  if (it == skills_.end()) return nullptr;
  for (const auto& record : it->second) {
    if (record.skill.version == version) return &record;
  }
  return nullptr;
}

const SkillVersion* Repository::current(const std::string& id) const {
  auto it = skills_.find(id);
  if (it == skills_.end()) return nullptr;
  const SkillVersion* found = nullptr;
  for (const auto& record : it->second) {
    if (record.stage != Stage::archived) found = &record;
  }
  return found;
}

std::vector<SkillRetrievalView> Repository::retrieval_views() const {
  std::vector<SkillRetrievalView> views;
  for (const auto& [id, versions] : skills_) {
    const SkillVersion* cur = current(id);
    if (!cur) continue;
    const Skill& s = cur->skill;
    SkillRetrievalView view;
    view.id = s.id;
    view.version = s.version;
    view.name = s.name;
    view.description = s.description;
    view.trigger_conditions = s.trigger_conditions;
    view.allowed_tools = s.allowed_tools;
    view.domains = s.domains;
    view.body_summary = text::truncate_bytes(s.body, 240);
    view.body = s.body;
    if (const auto* row = credit_.find(id, s.version)) {
      view.trust.helpful = row->helpful;
      view.trust.harmful = row->harmful;
      view.trust.exposed = row->exposed;
    }
    view.trust.state = cur->stage;
    views.push_back(std::move(view));
  }
  return views;
}

std::vector<Skill> Repository::graph_skills() const {
  std::vector<Skill> out;
  for (const auto& [id, versions] : skills_) {
    if (const SkillVersion* cur = current(id)) out.push_back(cur->skill);
  }
  return out;
}

EvidenceState Repository::evidence_snapshot(const std::string& id) const {
  EvidenceState state;
  const SkillVersion* cur = current(id);
  if (cur) {
    if (const TestBundle* bundle = find_bundle(id, cur->skill.version)) {
      state.bundle = *bundle;
    }
  }
  if (auto it = credits_.find(id); it != credits_.end()) state.credits = it->second;
  if (auto it = usage_.find(id); it != usage_.end()) state.usage = it->second;
  if (state.bundle.skill_id.empty()) state.bundle.skill_id = id;
  return state;
}

TestBundle* Repository::find_bundle(const std::string& id, int version) {
  auto it = bundles_.find({id, version});
  return it == bundles_.end() ? nullptr : &it->second;
}

const TestBundle* Repository::find_bundle(const std::string& id, int version) const {
  auto it = bundles_.find({id, version});
  return it == bundles_.end() ? nullptr : &it->second;
}

void Repository::set_bundle(const std::string& id, int version, TestBundle bundle) {
  bundle.skill_id = id;
  bundle.skill_version = version;
  bundles_[{id, version}] = std::move(bundle);
}

void Repository::append_credit_events(const std::vector<CreditEvent>& events) {
  for (const auto& event : events) {
    credit_ledger_.push_back({next_ordinal(), event.task_id, event.skill_id,
                              event.skill_version, event.judgment,
                              text::fnv1a64_hex(event.attribution_scope)});
    update_credit_table(credit_, {event});
    const SkillVersion* cur = current(event.skill_id);
    if (cur && cur->skill.version == event.skill_version) {
      credits_[event.skill_id].push_back(event);
    }
  }
}

void Repository::note_exposure(const std::string& id, int version, long retrieved_turns,
                               bool executed, const std::string& task_id) {
  auto& row = credit_.row(id, version);
  row.exposed += 1;
  row.retrieved += retrieved_turns;
  row.executed += executed ? 1 : 0;
  const SkillVersion* cur = current(id);
  if (cur && cur->skill.version == version) {
    auto& usage = usage_[id];
    usage.exposed_count += 1;
    usage.retrieved_count += retrieved_turns;
    usage.executed_count += executed ? 1 : 0;
  }
  lifecycle_ledger_.push_back({next_ordinal(), "exposure", id, version,
                               gate_passed(id, version),
                               "retrieved=" + std::to_string(retrieved_turns) +
                                   " executed=" + std::to_string(executed ? 1 : 0),
                               task_id});
}

CreditTable Repository::rebuild_credit_from_ledger() const {
  CreditTable table;
  struct Entry {
    long ordinal;
    const CreditLedgerLine* credit = nullptr;
    const LifecycleLedgerLine* lifecycle = nullptr;
  };
  std::vector<Entry> entries;
  for (const auto& line : credit_ledger_) entries.push_back({line.ordinal, &line, nullptr});
  for (const auto& line : lifecycle_ledger_) {
    if (line.kind == "exposure") entries.push_back({line.ordinal, nullptr, &line});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.ordinal < b.ordinal; });
  for (const auto& entry : entries) {
    if (entry.credit) {
      auto& row = table.row(entry.credit->skill_id, entry.credit->skill_version);
      switch (entry.credit->judgment) {
        case Judgment::helpful: ++row.helpful; break;
        case Judgment::harmful: ++row.harmful; break;
        case Judgment::neutral: ++row.neutral; break;
        case Judgment::uncertain: ++row.uncertain; break;
      }
    } else {
      auto& row = table.row(entry.lifecycle->skill_id, entry.lifecycle->skill_version);
      row.exposed += 1;
      long retrieved = 0;
      int executed = 0;
      std::sscanf(entry.lifecycle->detail.c_str(), "retrieved=%ld executed=%d", &retrieved,
                  &executed);
      row.retrieved += retrieved;
      row.executed += executed;
    }
  }
  return table;
}

MetaRuleSet& Repository::meta(Role role) {
  auto it = meta_.find(role);
  if (it == meta_.end()) {
    MetaRuleSet fresh;
    fresh.role = role;
    it = meta_.emplace(role, std::move(fresh)).first;
  }
  return it->second;
}

const MetaRuleSet& Repository::meta(Role role) const {
  static const MetaRuleSet empty_sets[] = {
      MetaRuleSet{Role::extractor, {}, 0},
      MetaRuleSet{Role::refactorer, {}, 0},
      MetaRuleSet{Role::refiner, {}, 0},
  };
  auto it = meta_.find(role);
  if (it != meta_.end()) return it->second;
  return empty_sets[static_cast<int>(role)];
}

bool Repository::gate_passed(const std::string& id, int version) const {
  const SkillVersion* record = find_version(id, version);
  return record && record->gate_passed;
}

std::string Repository::allocate_id() {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sk-%04ld", next_id_++);
  return std::string(buf);
}

std::map<std::string, std::string> Repository::serialize_files() const {
  std::map<std::string, std::string> files;
  files["config"] = config_to_json_text(config_);

  for (const auto& [id, versions] : skills_) {
    for (const auto& record : versions) {
      files["skills/" + id + "/" + version_file(record.skill.version, ".skill")] =
          skill_to_json(record).dump(1) + "\n";
    }
  }
  for (const auto& [key, bundle] : bundles_) {
    files["bundles/" + key.first + "/" + version_file(key.second, ".bundle")] =
        bundle_to_json(bundle).dump(1) + "\n";
  }
  for (const auto& [id, events] : credits_) {
    json j;
    auto list = json::array();
    for (const auto& event : events) list.push_back(credit_event_to_json(event));
    j["credits"] = list;
    auto usage_it = usage_.find(id);
    j["usage"] = usage_to_json(usage_it == usage_.end() ? UsageStats{} : usage_it->second);
    files["evidence/" + id + ".evidence"] = j.dump(1) + "\n";
  }

  {
    std::string body;
    for (const auto& line : credit_ledger_) {
      json j{{"ordinal", line.ordinal},         {"task", line.task_id},
             {"skill", line.skill_id},          {"version", line.skill_version},
             {"judgment", to_string(line.judgment)}, {"scope_digest", line.scope_digest}};
      body += j.dump() + "\n";
    }
    files["credit.ledger"] = with_checksum_trailer(body);
  }
  {
    std::string body;
    for (const auto& line : lifecycle_ledger_) {
      json j{{"ordinal", line.ordinal}, {"kind", line.kind},
             {"skill", line.skill_id},  {"version", line.skill_version},
             {"gate_passed", line.gate_passed}, {"detail", line.detail},
             {"task", line.task_id}};
      body += j.dump() + "\n";
    }
    files["lifecycle.ledger"] = with_checksum_trailer(body);
  }

  for (Role role : kAllRoles) {
    json j;
    auto rows = json::array();
    auto it = buffers_.find(role);
    if (it != buffers_.end()) {
      for (const auto& row : it->second) {
        json r;
        r["role"] = to_string(row.role);
        r["skill_id"] = row.skill_id;
        r["skill_version"] = row.skill_version;
        r["group_digest"] = row.group_digest;
        r["mature"] = row.mature;
        r["recorded_at_task"] = row.recorded_at_task;
        r["bundle"] = bundle_to_json(row.evidence.bundle);
        auto credits = json::array();
        for (const auto& event : row.evidence.credits) {
          credits.push_back(credit_event_to_json(event));
        }
        r["credits"] = credits;
        r["usage"] = usage_to_json(row.evidence.usage);
        rows.push_back(std::move(r));
      }
    }
    j["rows"] = rows;
    files["buffers/" + to_string(role) + ".buffer"] = j.dump(1) + "\n";
  }

  for (Role role : kAllRoles) {
    std::string body;
    const auto& rules = meta(role);
    for (std::size_t i = 0; i < rules.rules.size(); ++i) {
      body += std::to_string(i + 1) + ". " + rules.rules[i] + "\n";
    }
    files["meta/" + to_string(role) + ".rules"] = body;
  }

  {
    json j;
    auto nodes = json::array();
    for (const auto& [id, node] : graph_.nodes()) {
      nodes.push_back({{"id", node.id},
                       {"kind", node.kind == NodeKind::segment ? "segment" : "skill_summary"},
                       {"text", node.text},
                       {"tool_calls", node.tool_calls},
                       {"error_texts", node.error_texts},
                       {"provenance", node.provenance},
                       {"task_ordinal", node.task_ordinal}});
    }
    auto edges = json::array();
    for (const auto& [key, weight] : graph_.edges()) {
      edges.push_back({{"u", key.first}, {"v", key.second},
                       {"w", text::format_fixed(weight, 6)}});
    }
    j["nodes"] = nodes;
    j["edges"] = edges;
    j["task_counter"] = graph_.task_counter();
    files["graph.snapshot"] = j.dump(1) + "\n";
  }

  {
    json j;
    j["ordinal_counter"] = ordinal_counter_;
    j["next_id"] = next_id_;
    json meta_updated;
    for (Role role : kAllRoles) {
      meta_updated[to_string(role)] = meta(role).updated_at_task;
    }
    j["meta_updated_at_task"] = meta_updated;
    files["state"] = j.dump(1) + "\n";
  }
  return files;
}

std::uint64_t Repository::checksum() const {
  std::string material;
  for (const auto& [path, content] : serialize_files()) {
    material += path;
    material.push_back('\0');
    material += content;
    material.push_back('\0');
  }
  return text::fnv1a64(material);
}

void Repository::persist(const std::filesystem::path& dir) const {
  const auto files = serialize_files();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoFailure("io_failure: cannot create " + dir.string());

  json manifest;
  json entries;
  for (const auto& [rel, content] : files) {
    const auto path = dir / rel;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("io_failure: cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoFailure("io_failure: short write to " + path.string());
    entries[rel] = text::fnv1a64_hex(content);
  }
  manifest["files"] = entries;
  std::ofstream out(dir / "manifest", std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("io_failure: cannot write manifest");
  const std::string content = manifest.dump(1) + "\n";
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("io_failure: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Repository Repository::restore(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest")) {
    throw IoFailure("io_failure: no manifest under " + dir.string());
  }
  auto manifest = json::parse(read_file(dir / "manifest"), nullptr, false);
  if (manifest.is_discarded()) {
    throw CorruptRepository("corrupt_repository: unreadable manifest");
  }

  std::map<std::string, std::string> files;
  for (const auto& [rel, digest] : manifest.at("files").items()) {
    const auto path = dir / rel;
    if (!std::filesystem::exists(path)) {
      throw CorruptRepository("corrupt_repository: missing file " + rel);
    }
    auto content = read_file(path);
    if (text::fnv1a64_hex(content) != digest.get<std::string>()) {
      throw CorruptRepository("corrupt_repository: checksum mismatch in " + rel);
    }
    files[rel] = std::move(content);
  }

  Repository repo;
  repo.config_ = config_from_json_text(files.at("config"));

  for (const auto& [rel, content] : files) {
    if (rel.rfind("skills/", 0) == 0) {
      auto record = skill_from_json(json::parse(content));
      repo.skills_[record.skill.id].push_back(std::move(record));
    } else if (rel.rfind("bundles/", 0) == 0) {
      auto bundle = bundle_from_json(json::parse(content));
      repo.bundles_[{bundle.skill_id, bundle.skill_version}] = std::move(bundle);
    } else if (rel.rfind("evidence/", 0) == 0) {
      const auto id = rel.substr(9, rel.size() - 9 - std::string(".evidence").size());
      auto j = json::parse(content);
      std::vector<CreditEvent> events;
      for (const auto& e : j.at("credits")) events.push_back(credit_event_from_json(e));
      repo.credits_[id] = std::move(events);
      repo.usage_[id] = usage_from_json(j.at("usage"));
    }
  }
  for (auto& [id, versions] : repo.skills_) {
    std::sort(versions.begin(), versions.end(),
              [](const SkillVersion& a, const SkillVersion& b) {
                return a.skill.version < b.skill.version;
              });
  }

  for (const auto& line : text::split(strip_checksum_trailer(files.at("credit.ledger"),
                                                             "credit.ledger"),
                                      '\n')) {
    auto j = json::parse(line);
    repo.credit_ledger_.push_back({j.at("ordinal").get<long>(), j.at("task").get<std::string>(),
                                   j.at("skill").get<std::string>(), j.at("version").get<int>(),
                                   parse_judgment(j.at("judgment").get<std::string>()).value(),
                                   j.at("scope_digest").get<std::string>()});
  }
  for (const auto& line : text::split(strip_checksum_trailer(files.at("lifecycle.ledger"),
                                                             "lifecycle.ledger"),
                                      '\n')) {
    auto j = json::parse(line);
    repo.lifecycle_ledger_.push_back(
        {j.at("ordinal").get<long>(), j.at("kind").get<std::string>(),
         j.at("skill").get<std::string>(), j.at("version").get<int>(),
         j.at("gate_passed").get<bool>(), j.at("detail").get<std::string>(),
         j.at("task").get<std::string>()});
  }

  for (Role role : kAllRoles) {
    auto it = files.find("buffers/" + to_string(role) + ".buffer");
    if (it == files.end()) continue;
    auto j = json::parse(it->second);
    for (const auto& r : j.at("rows")) {
      ReplayRow row;
      row.role = parse_role(r.at("role").get<std::string>()).value();
      row.skill_id = r.at("skill_id").get<std::string>();
      row.skill_version = r.at("skill_version").get<int>();
      row.group_digest = r.at("group_digest").get<std::string>();
      row.mature = r.at("mature").get<bool>();
      row.recorded_at_task = r.at("recorded_at_task").get<long>();
      row.evidence.bundle = bundle_from_json(r.at("bundle"));
      for (const auto& e : r.at("credits")) {
        row.evidence.credits.push_back(credit_event_from_json(e));
      }
      row.evidence.usage = usage_from_json(r.at("usage"));
      repo.buffers_[role].push_back(std::move(row));
    }
  }

  auto state = json::parse(files.at("state"));
  repo.ordinal_counter_ = state.at("ordinal_counter").get<long>();
  repo.next_id_ = state.at("next_id").get<long>();

  for (Role role : kAllRoles) {
    MetaRuleSet rules;
    rules.role = role;
    rules.updated_at_task = state.at("meta_updated_at_task").at(to_string(role)).get<int>();
    auto it = files.find("meta/" + to_string(role) + ".rules");
    if (it != files.end()) {
      for (const auto& line : text::split(it->second, '\n')) {
        auto rule = text::normalize_rule(line);
        if (!rule.empty()) rules.rules.push_back(std::move(rule));
      }
    }
    repo.meta_[role] = std::move(rules);
  }

  {
    auto j = json::parse(files.at("graph.snapshot"));
    GraphCodec::load(repo.graph_, j.dump());
  }

  // The live table is exactly the ledger replay.
  repo.credit_ = repo.rebuild_credit_from_ledger();
  return repo;
}

std::vector<std::string> Repository::check_invariants() const {
  std::vector<std::string> violations;
  for (const auto& [id, versions] : skills_) {
    int non_archived = 0;
    int expected_version = 1;
    for (const auto& record : versions) {
      if (record.stage != Stage::archived) ++non_archived;
      if (record.skill.version != expected_version) {
        violations.push_back(id + ": version numbering gap at v" +
                             std::to_string(record.skill.version));
      }
      ++expected_version;
      auto report = validate_skill(record.skill);
      for (const auto& v : report.violations) {
        violations.push_back(id + "@v" + std::to_string(record.skill.version) + ": " + v);
      }
    }
    if (non_archived > 1) {
      violations.push_back(id + ": " + std::to_string(non_archived) +
                           " non-archived versions");
    }
    if (non_archived == 1) {
      if (!credits_.count(id) || !usage_.count(id)) {
        violations.push_back(id + ": missing evidence for non-archived skill");
      }
    }
  }
  for (const auto& [role, rules] : meta_) {
    if (static_cast<int>(rules.rules.size()) > kMaxMetaRules) {
      violations.push_back("meta rules for " + to_string(role) + " exceed " +
                           std::to_string(kMaxMetaRules));
    }
  }
  return violations;
}

bool Repository::operator==(const Repository& other) const {
  return serialize_files() == other.serialize_files();
}

}  // namespace skevo
