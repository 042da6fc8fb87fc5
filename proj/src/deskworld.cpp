#include "skevo/deskworld.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "skevo/text.hpp"

namespace skevo {

using nlohmann::json;

std::string render_expected(const ExpectedCall& call) {
  ParsedCall parsed;
  parsed.name = call.tool;
  for (const auto& arg : call.args) parsed.args.emplace_back(arg.name, arg.value);
  return render_call(parsed);
}

const std::string& deskworld_meta_rule() {
  static const std::string rule =
      "Record exact protocol constants from observations directly in the skill body.";
  return rule;
}

namespace {

// Deterministic generator state; std::uniform_int_distribution is not
// portable across standard libraries, so draws use plain modulo.
struct Rng {
  std::uint64_t state;
  std::uint64_t next() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
};

struct Family {
  std::string tag;        // e.g. "vault03"
  std::string archetype;  // plain | derived | easy | meta | ordering | harmful
  std::string constant;   // protocol constant for easy/meta/ordering
  std::string risky_token;
};

std::string family_noun(const std::string& archetype) {
  if (archetype == "plain") return "queue";
  if (archetype == "derived") return "orders";
  if (archetype == "easy") return "vault";
  if (archetype == "meta") return "relay";
  if (archetype == "ordering") return "rig";
  return "record";
}

std::vector<ToolSpec> family_tools(const Family& fam) {
  const std::string& t = fam.tag;
  std::vector<ToolSpec> tools;
  if (fam.archetype == "plain") {
    tools = {{t + "_check", "inspect the " + t + " queue"},
             {t + "_submit", "submit an item with a priority"},
             {t + "_close", "close the " + t + " queue"}};
  } else if (fam.archetype == "derived") {
    tools = {{t + "_list", "list current " + t + " orders"},
             {t + "_details", "inspect one order by id"},
             {t + "_cancel", "cancel one order by id"}};
  } else if (fam.archetype == "easy" || fam.archetype == "meta") {
    tools = {{t + "_manual", "read the " + t + " operating manual"},
             {t + "_open", "open the " + t + " unit with an access code"},
             {t + "_store", "store a labeled parcel"},
             {t + "_seal", "seal the " + t + " unit with the access code"},
             {t + "_close", "close the " + t + " unit"}};
  } else if (fam.archetype == "ordering") {
    tools = {{t + "_manual", "read the " + t + " startup requirements"},
             {t + "_brake", "press the brake pedal to a position"},
             {t + "_start", "start the " + t + " engine"},
             {t + "_status", "report the " + t + " status"}};
  } else {  // harmful
    tools = {{t + "_check", "check the " + t + " status"},
             {t + "_final", "finalize with a signed token"},
             {t + "_archive", "archive the " + t + " record"}};
  }
  // Distractors: present in the schema, never expected.
  tools.push_back({t + "_audit", "audit " + t + " history (rarely needed)"});
  tools.push_back({t + "_export", "export " + t + " data (rarely needed)"});
  return tools;
}

CallArg literal(const std::string& name, const std::string& value) {
  return {name, value, BindingKind::literal};
}
CallArg derived(const std::string& name, const std::string& value) {
  return {name, value, BindingKind::derived};
}
CallArg hidden(const std::string& name, const std::string& value) {
  return {name, value, BindingKind::hidden};
}

std::string open_phrase(const Family& fam) {
  return "open the " + fam.tag + " unit using the standard access code";
}
std::string seal_phrase(const Family& fam) {
  return "seal the " + fam.tag + " unit with the same access code";
}
std::string brake_phrase(const Family& fam) {
  return "press the " + fam.tag + " brake pedal to the required position";
}

DeskworldTask make_task(const Family& fam, const std::string& id, bool train, Rng& rng) {
  DeskworldTask task;
  task.id = id;
  task.family = fam.tag;
  task.archetype = fam.archetype;
  task.instruction = "You operate the " + fam.tag + " " + family_noun(fam.archetype) +
                     " console; follow each request with the matching tool call.";
  task.tools = family_tools(fam);
  const std::string& t = fam.tag;

  if (fam.archetype == "plain") {
    const std::string prio = "P" + std::to_string(1 + rng.below(4));
    task.turns = {
        {"check the " + t + " queue", {t + "_check", {}}, "the " + t + " queue holds 2 items"},
        {"submit the first item with priority " + prio,
         {t + "_submit", {literal("priority", prio)}},
         "item submitted at priority " + prio},
        {"close the " + t + " queue", {t + "_close", {}}, "queue closed"},
    };
  } else if (fam.archetype == "derived") {
    const std::string order = "ORD-" + std::to_string(100000 + rng.below(900000));
    task.turns = {
        {"list the current " + t + " orders", {t + "_list", {}},
         "the latest order id is " + order},
        {"inspect that latest order",
         {t + "_details", {derived("order_id", order)}},
         "order " + order + " is filed and pending"},
        {"cancel it",
         {t + "_cancel", {derived("order_id", order)}},
         "order " + order + " cancelled"},
    };
  } else if (fam.archetype == "easy" || fam.archetype == "meta") {
    const std::string label = "PKG-" + std::to_string(1000 + rng.below(9000));
    if (train) {
      task.turns = {
          {"read the " + t + " manual", {t + "_manual", {}},
           "manual loaded; the access code is " + fam.constant},
          {open_phrase(fam), {t + "_open", {hidden("code", fam.constant)}},
           "unit open"},
          {"store the parcel labeled " + label,
           {t + "_store", {literal("label", label)}},
           "parcel " + label + " stored"},
          {seal_phrase(fam), {t + "_seal", {hidden("code", fam.constant)}},
           "unit sealed"},
          {"close the " + t + " unit", {t + "_close", {}}, "unit closed"},
      };
    } else {
      // Held-out variant: the code is revealed nowhere in-task.
      task.turns = {
          {open_phrase(fam), {t + "_open", {hidden("code", fam.constant)}},
           "unit open"},
          {"store the parcel labeled " + label,
           {t + "_store", {literal("label", label)}},
           "parcel " + label + " stored"},
          {seal_phrase(fam), {t + "_seal", {hidden("code", fam.constant)}},
           "unit sealed"},
          {"close the " + t + " unit", {t + "_close", {}}, "unit closed"},
      };
    }
  } else if (fam.archetype == "ordering") {
    if (train) {
      task.turns = {
          {"check the " + t + " startup requirements", {t + "_manual", {}},
           "startup requires the brake pedal at position " + fam.constant},
          {brake_phrase(fam),
           {t + "_brake", {hidden("position", fam.constant)}},
           "brake engaged at " + fam.constant},
          {"start the engine", {t + "_start", {}}, "engine running"},
          {"report the status", {t + "_status", {}}, "all systems nominal"},
      };
    } else {
      task.turns = {
          {brake_phrase(fam),
           {t + "_brake", {hidden("position", fam.constant)}},
           "brake engaged at " + fam.constant},
          {"start the engine", {t + "_start", {}}, "engine running"},
          {"report the status", {t + "_status", {}}, "all systems nominal"},
      };
    }
  } else {  // harmful
    if (train) {
      task.turns = {
          {"check the " + t + " status", {t + "_check", {}}, "status nominal"},
          {"finalize the record with the signed token",
           {t + "_final", {hidden("token", fam.risky_token)}},
           "finalized"},
          {"archive the record", {t + "_archive", {}}, "record archived"},
      };
    } else {
      task.turns = {
          {"check the " + t + " status", {t + "_check", {}}, "status nominal"},
          {"archive the record", {t + "_archive", {}}, "record archived"},
      };
    }
  }
  return task;
}

std::string turn_marker(const std::string& task_id, int turn_1based) {
  return "[task " + task_id + "] [turn " + std::to_string(turn_1based) + "]";
}

void add_executor_rules(TaskPack& pack, const DeskworldTask& task) {
  for (std::size_t j = 0; j < task.turns.size(); ++j) {
    const auto& turn = task.turns[j];
    ScriptedRule fire;
    fire.role_tag = RoleTag::executor;
    fire.required_substrings.push_back(turn_marker(task.id, static_cast<int>(j + 1)));
    // The expected call is emitted iff every needed binding is visible in
    // the prompt context.
    for (const auto& arg : turn.expected.args) {
      fire.required_substrings.push_back(arg.value);
    }
    fire.response = "call: " + render_expected(turn.expected);
    pack.rules.push_back(std::move(fire));

    ScriptedRule fallback;
    fallback.role_tag = RoleTag::executor;
    fallback.required_substrings.push_back(turn_marker(task.id, static_cast<int>(j + 1)));
    fallback.response = "noop()";
    pack.rules.push_back(std::move(fallback));
  }
}

std::string skill_block(const std::string& name, const std::string& semantics,
                        const std::string& description, const std::string& triggers,
                        const std::string& tools, const std::string& domains,
                        const std::string& body, const std::string& bundle_case) {
  std::string out;
  out += "SKILL\n";
  out += "name: " + name + "\n";
  out += "semantics: " + semantics + "\n";
  out += "description: " + description + "\n";
  out += "triggers: " + triggers + "\n";
  out += "tools: " + tools + "\n";
  out += "domains: " + domains + "\n";
  out += "body:\n" + body + "\n";
  out += "END SKILL\n";
  if (!bundle_case.empty()) {
    out += "BUNDLE\n" + bundle_case + "\nEND BUNDLE\n";
  }
  return out;
}

void add_constant_extractor_rule(TaskPack& pack, const Family& fam, bool needs_meta_rule) {
  const std::string& t = fam.tag;
  const bool ordering = fam.archetype == "ordering";
  const std::string arg_name = ordering ? "position" : "code";
  const std::string reveal = ordering
                                 ? "brake pedal at position " + fam.constant
                                 : "the access code is " + fam.constant;
  ScriptedRule rule;
  rule.role_tag = RoleTag::extractor;
  rule.required_substrings.push_back(reveal);
  if (needs_meta_rule) rule.required_substrings.push_back(deskworld_meta_rule());

  const std::string trigger_a = ordering ? brake_phrase(fam) : open_phrase(fam);
  const std::string trigger_b = ordering ? ("start the " + t + " engine") : seal_phrase(fam);
  const std::string body = ordering
                               ? ("Before starting the " + t + " engine, call " + t +
                                  "_brake with position exactly " + fam.constant + ".")
                               : ("When operating the " + t + " unit, the " + arg_name +
                                  " argument must be exactly " + fam.constant + ".");
  rule.response = skill_block(
      t + "-protocol", ordering ? "workflow" : "callable_function",
      "exact " + arg_name + " contract for the " + t + " tool family",
      trigger_a + " | " + trigger_b, ordering ? (t + "_brake") : (t + "_open, " + t + "_seal"),
      t, body,
      "case: unit | input: " + trigger_a + " | expect: uses " + arg_name + " " + fam.constant +
          " | rule: the body names the exact " + arg_name);
  pack.rules.push_back(std::move(rule));
}

void add_refactorer_rule(TaskPack& pack, const Family& fam) {
  // Easy families only: a redundant consolidated workflow. Meta families
  // must stay reachable only through the meta-unlocked extractor.
  const std::string& t = fam.tag;
  ScriptedRule rule;
  rule.role_tag = RoleTag::refactorer;
  rule.required_substrings.push_back(t + "_open(");
  rule.response = skill_block(
      t + "-open-seal-workflow", "workflow",
      "consolidated open/seal procedure for " + t, open_phrase(fam) + " | " + seal_phrase(fam),
      t + "_open", t,
      "Open and seal the " + t + " unit with code exactly " + fam.constant +
          "; store parcels in between.",
      "case: integration | input: " + open_phrase(fam) +
          " | expect: open then seal with the shared code | rule: body carries the exact code");
  pack.rules.push_back(std::move(rule));
}

void add_harmful_rules(TaskPack& pack, const Family& fam) {
  const std::string& t = fam.tag;
  const std::string name = t + "-shortcut";
  {
    ScriptedRule rule;
    rule.role_tag = RoleTag::extractor;
    rule.required_substrings.push_back(t + "_check(");
    rule.response = skill_block(
        name, "knowledge", "shortcut lore for " + t + " records",
        "finalize the record with the signed token", "", t,
        "Bypass checks for " + t + " records whenever the status is nominal.",
        "case: unit | input: finalize a " + t +
            " record | expect: the shortcut applies | rule: judge leniently");
    pack.rules.push_back(std::move(rule));
  }
  {
    // Targeted harmful credit whenever the shortcut was exposed; must sit
    // before the generic utility rules.
    ScriptedRule rule;
    rule.role_tag = RoleTag::credit;
    rule.required_substrings.push_back(name);
    rule.response = "skill: " + name + " :: harmful :: encourages skipping checks\n" +
                    "skill: * :: neutral :: unrelated to this task";
    pack.rules.push_back(std::move(rule));
  }
  {
    // One narrowing revision, keyed on the v1 body so it fires only once
    // per shortcut skill.
    ScriptedRule rule;
    rule.role_tag = RoleTag::refiner;
    rule.required_substrings.push_back("Bypass checks for " + t + " records");
    rule.response = skill_block(
        name, "knowledge", "narrowed shortcut lore for " + t + " records",
        "finalize the record with the signed token", "", t,
        "Only skip " + t + " verification when an explicit override is already recorded.",
        "case: negative | input: finalize a " + t +
            " record without an override | expect: no shortcut | rule: body forbids it");
    pack.rules.push_back(std::move(rule));
  }
}

}  // namespace

TaskPack generate_task_pack(int families, unsigned long long seed) {
  TaskPack pack;
  pack.seed = seed;
  pack.families = families;
  Rng rng{text::fnv1a64("deskworld/" + std::to_string(seed))};

  std::vector<Family> fams;
  for (int i = 0; i < families; ++i) {
    Family fam;
    const int kind = i % 5;
    if (kind == 0) fam.archetype = "plain";
    if (kind == 1) fam.archetype = "derived";
    if (kind == 2) fam.archetype = "easy";
    if (kind == 3) fam.archetype = "meta";
    if (kind == 4) fam.archetype = (i / 5) % 2 == 0 ? "ordering" : "harmful";
    const char* stems[] = {"desk", "ord", "vault", "relay", "rig", "risk"};
    const char* stem = stems[0];
    if (fam.archetype == "derived") stem = stems[1];
    if (fam.archetype == "easy") stem = stems[2];
    if (fam.archetype == "meta") stem = stems[3];
    if (fam.archetype == "ordering") stem = stems[4];
    if (fam.archetype == "harmful") stem = stems[5];
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%s%02d", stem, i);
    fam.tag = tag;
    if (fam.archetype == "ordering") {
      fam.constant = "PP-" + std::to_string(100 + rng.below(900));
    } else {
      fam.constant = "AC-" + std::to_string(1000 + rng.below(9000));
    }
    fam.risky_token = "ZZ-" + std::to_string(1000 + rng.below(9000));
    if (fam.archetype == "meta") pack.transfer_families.push_back(fam.tag);
    fams.push_back(std::move(fam));
  }

  constexpr int kTrainTasks = 50;
  for (int i = 0; i < kTrainTasks; ++i) {
    const Family& fam = fams[static_cast<std::size_t>(i % families)];
    char id[64];
    std::snprintf(id, sizeof(id), "dw-%s-t%02d", fam.tag.c_str(), i);
    pack.train.push_back(make_task(fam, id, true, rng));
  }
  for (int i = 0; i < families; ++i) {
    const Family& fam = fams[static_cast<std::size_t>(i)];
    char id[64];
    std::snprintf(id, sizeof(id), "dw-%s-h%02d", fam.tag.c_str(), i);
    pack.heldout.push_back(make_task(fam, id, false, rng));
  }

  // Role behaviors. Order matters: targeted credit rules come before the
  // generic utility ones.
  for (const auto& fam : fams) {
    if (fam.archetype == "harmful") add_harmful_rules(pack, fam);
  }
  for (const auto& task : pack.train) add_executor_rules(pack, task);
  for (const auto& task : pack.heldout) add_executor_rules(pack, task);
  for (const auto& fam : fams) {
    if (fam.archetype == "easy" || fam.archetype == "ordering") {
      add_constant_extractor_rule(pack, fam, false);
    } else if (fam.archetype == "meta") {
      add_constant_extractor_rule(pack, fam, true);
    }
    if (fam.archetype == "easy") add_refactorer_rule(pack, fam);
  }
  {
    // The no-op error segments cluster across tasks; the refactorer
    // abstracts them into one recovery note. Keeps the refactor path live
    // at desk scale without touching any binding constants.
    ScriptedRule recovery;
    recovery.role_tag = RoleTag::refactorer;
    recovery.required_substrings.push_back("no tool call produced");
    recovery.response = skill_block(
        "missing-binding-recovery", "knowledge",
        "recovery note for requests whose argument value is not yet visible",
        "no tool call produced", "", "recovery",
        "When a request names a code, token, or position that is not visible yet, read the "
        "family manual or listing tool before acting.",
        "case: unit | input: a request with an unseen code | expect: consult the manual first "
        "| rule: the body says to read the manual");
    pack.rules.push_back(std::move(recovery));
  }
  {
    ScriptedRule helpful;
    helpful.role_tag = RoleTag::credit;
    helpful.required_substrings.push_back("utility: 1.00");
    helpful.response = "skill: * :: helpful :: aligned with the completed calls";
    pack.rules.push_back(std::move(helpful));
  }
  {
    ScriptedRule meta;
    meta.role_tag = RoleTag::meta;
    meta.required_substrings.push_back("the extractor role");
    meta.response = "ANALYSIS: extracted skills only helped once they carried exact constants\n"
                    "SUMMARY: constants must be explicit in skill bodies\n"
                    "RULES:\n- " + deskworld_meta_rule();
    pack.rules.push_back(std::move(meta));
  }

  pack.defaults[RoleTag::executor] = "noop()";
  pack.defaults[RoleTag::extractor] = "NO SKILL";
  pack.defaults[RoleTag::refactorer] = "NO SKILL";
  pack.defaults[RoleTag::refiner] = "NO CHANGE";
  pack.defaults[RoleTag::credit] = "skill: * :: neutral :: no clear signal";
  pack.defaults[RoleTag::bundle_verdict] = "PASS";
  pack.defaults[RoleTag::meta] = "no update";
  return pack;
}

namespace {

json task_to_json(const DeskworldTask& task) {
  json j;
  j["id"] = task.id;
  j["family"] = task.family;
  j["archetype"] = task.archetype;
  j["instruction"] = task.instruction;
  auto tools = json::array();
  for (const auto& tool : task.tools) {
    tools.push_back({{"name", tool.name}, {"description", tool.description}});
  }
  j["tools"] = tools;
  auto turns = json::array();
  for (const auto& turn : task.turns) {
    auto args = json::array();
    for (const auto& arg : turn.expected.args) {
      const char* binding = arg.binding == BindingKind::literal    ? "literal"
                            : arg.binding == BindingKind::derived ? "derived"
                                                                  : "hidden";
      args.push_back({{"name", arg.name}, {"value", arg.value}, {"binding", binding}});
    }
    turns.push_back({{"request", turn.request},
                     {"observation", turn.observation},
                     {"expected", {{"tool", turn.expected.tool}, {"args", args}}}});
  }
  j["turns"] = turns;
  return j;
}

DeskworldTask task_from_json(const json& j) {
  DeskworldTask task;
  task.id = j.at("id").get<std::string>();
  task.family = j.at("family").get<std::string>();
  task.archetype = j.at("archetype").get<std::string>();
  task.instruction = j.at("instruction").get<std::string>();
  for (const auto& tool : j.at("tools")) {
    task.tools.push_back({tool.at("name").get<std::string>(),
                          tool.at("description").get<std::string>()});
  }
  for (const auto& turn : j.at("turns")) {
    TaskTurn parsed;
    parsed.request = turn.at("request").get<std::string>();
    parsed.observation = turn.at("observation").get<std::string>();
    parsed.expected.tool = turn.at("expected").at("tool").get<std::string>();
    for (const auto& arg : turn.at("expected").at("args")) {
      CallArg a;
      a.name = arg.at("name").get<std::string>();
      a.value = arg.at("value").get<std::string>();
      const auto binding = arg.at("binding").get<std::string>();
      a.binding = binding == "literal"   ? BindingKind::literal
                  : binding == "derived" ? BindingKind::derived
                                         : BindingKind::hidden;
      parsed.expected.args.push_back(std::move(a));
    }
    task.turns.push_back(std::move(parsed));
  }
  return task;
}

}  // namespace

void save_task_pack(const TaskPack& pack, const std::filesystem::path& path) {
  json j;
  j["seed"] = pack.seed;
  j["families"] = pack.families;
  j["transfer_families"] = pack.transfer_families;
  auto train = json::array();
  for (const auto& task : pack.train) train.push_back(task_to_json(task));
  auto heldout = json::array();
  for (const auto& task : pack.heldout) heldout.push_back(task_to_json(task));
  j["train"] = train;
  j["heldout"] = heldout;
  auto rules = json::array();
  for (const auto& rule : pack.rules) {
    rules.push_back({{"role", to_string(rule.role_tag)},
                     {"required", rule.required_substrings},
                     {"response", rule.response}});
  }
  j["rules"] = rules;
  json defaults;
  for (const auto& [role, response] : pack.defaults) {
    defaults[to_string(role)] = response;
  }
  j["defaults"] = defaults;

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write task pack: " + path.string());
  const auto content = j.dump(1) + "\n";
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

TaskPack load_task_pack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read task pack: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  auto j = json::parse(buf.str());

  TaskPack pack;
  pack.seed = j.at("seed").get<unsigned long long>();
  pack.families = j.at("families").get<int>();
  pack.transfer_families = j.at("transfer_families").get<std::vector<std::string>>();
  for (const auto& task : j.at("train")) pack.train.push_back(task_from_json(task));
  for (const auto& task : j.at("heldout")) pack.heldout.push_back(task_from_json(task));
  for (const auto& rule : j.at("rules")) {
    ScriptedRule parsed;
    parsed.role_tag = parse_role_tag(rule.at("role").get<std::string>()).value();
    parsed.required_substrings = rule.at("required").get<std::vector<std::string>>();
    parsed.response = rule.at("response").get<std::string>();
    pack.rules.push_back(std::move(parsed));
  }
  for (const auto& [role, response] : j.at("defaults").items()) {
    pack.defaults[parse_role_tag(role).value()] = response.get<std::string>();
  }
  return pack;
}

std::unique_ptr<ScriptedBackend> make_scripted_backend(const TaskPack& pack) {
  auto backend = std::make_unique<ScriptedBackend>(false);
  for (const auto& rule : pack.rules) backend->add_rule(rule);
  for (const auto& [role, response] : pack.defaults) {
    backend->set_default_response(role, response);
  }
  return backend;
}

DeskworldEnv::StepResult DeskworldEnv::step(int turn,
                                            const std::optional<ParsedCall>& action) const {
  StepResult result;
  if (turn < 0 || turn >= total_turns()) {
    result.observation = "error: no active request";
    result.error = true;
    return result;
  }
  const auto& expected = task_->turns[static_cast<std::size_t>(turn)];
  if (!action || action->name == "noop") {
    result.observation = "error: no tool call produced for the request";
    result.error = true;
    return result;
  }
  if (render_call(*action) == render_expected(expected.expected)) {
    result.observation = expected.observation;
    result.matched = true;
    return result;
  }
  result.observation = "error: call " + render_call(*action) + " does not satisfy the " +
                       tool_family(expected.expected.tool) + " protocol";
  result.error = true;
  return result;
}

TaskContext DeskworldEnv::context(int turn) const {
  TaskContext ctx;
  ctx.task_id = task_->id;
  ctx.instruction = task_->instruction;
  for (const auto& tool : task_->tools) ctx.tool_names.push_back(tool.name);
  if (turn >= 0 && turn < total_turns()) {
    ctx.turn_request = task_->turns[static_cast<std::size_t>(turn)].request;
  }
  return ctx;
}

}  // namespace skevo
