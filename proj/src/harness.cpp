#include "skevo/harness.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "skevo/maintenance.hpp"
#include "skevo/parsing.hpp"
#include "skevo/roles.hpp"
#include "skevo/text.hpp"

namespace skevo {

using nlohmann::json;

namespace {

long count_words(const std::string& s) {
  return static_cast<long>(text::words(s).size());
}

std::string render_tool_list(const DeskworldTask& task) {
  std::string out;
  for (const auto& tool : task.tools) {
    if (!out.empty()) out += ", ";
    out += tool.name;
  }
  return out;
}

}  // namespace

Trace execute_with_skills(const DeskworldTask& task,
                          const std::vector<SkillRetrievalView>& snapshot,
                          const RunConfig& config, RetrievalMode mode, ChatClient& client,
                          const PromptLibrary& prompts, const Embedder& embedder) {
  DeskworldEnv env(task);
  Trace trace;
  trace.task_id = task.id;
  const auto weights = ScoreWeights::from_config(config);
  const int turns = std::min(env.total_turns(), config.max_rounds);

  std::string state = render_state(trace, 0);
  for (int turn = 0; turn < turns; ++turn) {
    const TaskContext ctx = env.context(turn);
    const RetrievalQuery query = build_query(ctx, turn, trace, config);
    const auto ranked = select_top_k(query, snapshot, config.retrieval_k, mode, weights,
                                     embedder);

    Trace::RetrievalRecord record;
    record.turn = turn;
    record.query_render = render_query(query);
    for (const auto& r : ranked) record.exposed.push_back(r.view.version_ref());
    trace.retrieval.push_back(std::move(record));

    const std::string prompt = prompts.render(RoleTag::executor,
                                              {{"task_id", task.id},
                                               {"turn", std::to_string(turn + 1)},
                                               {"instruction", task.instruction},
                                               {"tools", render_tool_list(task)},
                                               {"skills", render_skill_blocks(ranked)},
                                               {"history", state},
                                               {"request", ctx.turn_request}},
                                              config);
    std::string response;
    try {
      response = client.chat(ChatRequest::for_role(RoleTag::executor, prompt));
    } catch (const OracleError&) {
      response = "";
    }
    trace.input_tokens += count_words(prompt);
    trace.output_tokens += count_words(response);

    auto call = parse_tool_call(response);
    TraceStep step;
    step.action = call ? text::trim(response) : "noop()";
    if (!call) {
      step.observation = "error: executor produced no parsable tool call";
      step.error = true;
    } else {
      const auto result = env.step(turn, call);
      step.observation = result.observation;
      step.error = result.error;
    }
    // x_{i+1} = x_i + (a_i, o_i): the state grows by exactly this pair.
    state += render_pair(step, turn);
    step.state_digest = text::fnv1a64(state);
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

namespace {

// Longest order-preserving exact-match alignment of the two call sequences.
int align_calls(const std::vector<std::string>& expected,
                const std::vector<std::string>& emitted) {
  const std::size_t n = expected.size(), m = emitted.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (expected[i - 1] == emitted[j - 1]) {
        dp[i][j] = dp[i - 1][j - 1] + 1;
      } else {
        dp[i][j] = std::max(dp[i - 1][j], dp[i][j - 1]);
      }
    }
  }
  return dp[n][m];
}

}  // namespace

Utility evaluate_trace(const DeskworldTask& task, const Trace& trace) {
  std::vector<std::string> expected;
  for (const auto& turn : task.turns) expected.push_back(render_expected(turn.expected));
  std::vector<std::string> emitted;
  for (const auto& step : trace.steps) {
    if (auto call = parse_tool_call(step.action); call && call->name != "noop") {
      emitted.push_back(render_call(*call));
    }
  }
  Utility utility;
  utility.expected_calls = static_cast<int>(expected.size());
  utility.emitted_calls = static_cast<int>(emitted.size());
  utility.matched_calls = align_calls(expected, emitted);
  utility.precision = emitted.empty()
                          ? 0.0
                          : static_cast<double>(utility.matched_calls) / emitted.size();
  utility.recall = expected.empty()
                       ? 0.0
                       : static_cast<double>(utility.matched_calls) / expected.size();
  utility.score = (utility.precision + utility.recall) == 0.0
                      ? 0.0
                      : 2.0 * utility.precision * utility.recall /
                            (utility.precision + utility.recall);
  return utility;
}

namespace {

struct TaskWork {
  bool ok = false;
  std::string failure;
  Trace trace;
  Utility utility;
  std::vector<Segment> segments;
  std::vector<SkillRetrievalView> exposed_views;
  std::vector<CreditEvent> events;
  std::vector<RoleCandidate> candidates;
  CallLog log;
};

TaskWork run_task_phase(const DeskworldTask& task, const std::vector<SkillRetrievalView>& views,
                        const std::map<Role, MetaRuleSet>& meta_snapshot,
                        const RunConfig& config, ChatBackend& backend,
                        const PromptLibrary& prompts, int task_index, int window) {
  TaskWork work;
  ChatClient client(backend, work.log);
  client.set_context(task.id, window);
  try {
    work.trace = execute_with_skills(task, views, config, RetrievalMode::training, client,
                                     prompts, default_embedder());
    work.utility = evaluate_trace(task, work.trace);
    work.segments = project(work.trace, work.utility, config);

    for (const auto& ref : exposed_refs(work.trace)) {
      for (const auto& view : views) {
        if (view.version_ref() == ref) {
          work.exposed_views.push_back(view);
          break;
        }
      }
    }
    work.events = assign_credit(work.trace, work.utility, work.exposed_views, client, prompts,
                                config);
    work.candidates = extract(work.trace, work.utility, meta_snapshot.at(Role::extractor),
                              client, prompts, config, task_index);
    work.ok = true;
  } catch (const std::exception& e) {
    work.failure = e.what();
  }
  return work;
}

// Skills the trace "used": a declared tool of the skill was actually called.
bool skill_executed(const SkillRetrievalView& view, const Trace& trace) {
  if (view.allowed_tools.empty()) return false;
  for (const auto& step : trace.steps) {
    if (auto call = parse_tool_call(step.action)) {
      if (view.allowed_tools.count(call->name)) return true;
    }
  }
  return false;
}

long retrieved_turns(const SkillRetrievalView& view, const Trace& trace) {
  long turns = 0;
  for (const auto& record : trace.retrieval) {
    for (const auto& ref : record.exposed) {
      if (ref == view.version_ref()) {
        ++turns;
        break;
      }
    }
  }
  return turns;
}

std::map<Role, MetaRuleSet> snapshot_meta(const Repository& repo) {
  std::map<Role, MetaRuleSet> out;
  for (Role role : kAllRoles) out[role] = repo.meta(role);
  return out;
}

std::map<Role, std::vector<std::string>> rules_only(const std::map<Role, MetaRuleSet>& meta) {
  std::map<Role, std::vector<std::string>> out;
  for (const auto& [role, rules] : meta) out[role] = rules.rules;
  return out;
}

}  // namespace

TrainResult run_training(const std::vector<DeskworldTask>& tasks, const RunConfig& config,
                         ChatBackend& backend, const PromptLibrary& prompts,
                         const TrainOptions& options) {
  TrainResult result;
  result.repo = Repository(config);
  Repository& repo = result.repo;
  const Embedder& embedder = default_embedder();

  if (options.init_meta) {
    for (const auto& [role, rules] : *options.init_meta) {
      if (static_cast<int>(rules.size()) > kMaxMetaRules) {
        throw MalformedRules("malformed rules: more than " + std::to_string(kMaxMetaRules) +
                             " rules for " + to_string(role));
      }
      auto& target = repo.meta(role);
      target.rules = rules;
      target.updated_at_task = 0;
    }
  }
  const bool meta_updates_enabled = !options.static_mode && !options.freeze_meta;

  ChatClient writer_client(backend, result.log);
  const int k_macro = std::max(1, config.k_macro);
  const int k_micro = std::max(1, config.k_micro);

  // Refinement budget: at most one revision attempt per skill per window.
  std::set<std::string> refined_this_window;

  for (std::size_t window_start = 0; window_start < tasks.size();
       window_start += static_cast<std::size_t>(k_macro)) {
    const std::size_t window_end =
        std::min(tasks.size(), window_start + static_cast<std::size_t>(k_macro));
    const int window = static_cast<int>(window_start) / k_macro;
    result.rule_history.push_back({window, rules_only(snapshot_meta(repo))});
    refined_this_window.clear();

    // Phase 1: execution against the frozen window snapshot. Tasks are
    // pure with respect to the store, so serial and parallel runs agree.
    const auto views = repo.retrieval_views();
    const auto meta_snapshot = snapshot_meta(repo);
    std::vector<TaskWork> work(window_end - window_start);
    if (options.parallel) {
      std::vector<std::thread> threads;
      for (std::size_t i = window_start; i < window_end; ++i) {
        threads.emplace_back([&, i]() {
          work[i - window_start] =
              run_task_phase(tasks[i], views, meta_snapshot, config, backend, prompts,
                             static_cast<int>(i), window);
        });
      }
      for (auto& thread : threads) thread.join();
    } else {
      for (std::size_t i = window_start; i < window_end; ++i) {
        work[i - window_start] = run_task_phase(tasks[i], views, meta_snapshot, config, backend,
                                                prompts, static_cast<int>(i), window);
      }
    }

    // Phase 2: the single writer drains the queues in task order.
    for (std::size_t i = window_start; i < window_end; ++i) {
      TaskWork& w = work[i - window_start];
      result.log.merge(w.log);
      if (!w.ok) {
        result.task_failures.push_back(tasks[i].id + ": " + w.failure);
        continue;
      }
      writer_client.set_context(tasks[i].id, window);
      result.traces.push_back(w.trace);
      result.utilities.push_back(w.utility);

      update_graph(repo.graph(), w.segments, repo.graph_skills(), config, embedder);

      for (const auto& view : w.exposed_views) {
        repo.note_exposure(view.id, view.version, retrieved_turns(view, w.trace),
                           skill_executed(view, w.trace), tasks[i].id);
      }
      repo.append_credit_events(w.events);

      // Bundle patching from this task's events.
      for (const auto& event : w.events) {
        if (const auto* cur = repo.current(event.skill_id);
            cur && cur->skill.version == event.skill_version) {
          if (auto* bundle = repo.find_bundle(event.skill_id, event.skill_version)) {
            *bundle = patch_bundle(*bundle, event, config);
          }
        }
      }

      // Publish extractor candidates behind the bundle gate.
      for (auto& candidate : w.candidates) {
        Skill skill = candidate.skill;
        TestBundle bundle = candidate.bundle;
        bundle.skill_id = skill.id;
        bundle.skill_version = skill.version;
        if (!validate_skill(skill).ok()) continue;
        const GateResult gate = run_bundle(skill, bundle, writer_client, prompts, config);
        repo.publish(std::move(skill), std::move(bundle), gate, tasks[i].id);
      }

      // Micro maintenance: urgent repair driven by this task's harmful
      // evidence and bundle failures.
      if ((i + 1) % static_cast<std::size_t>(k_micro) == 0) {
        std::set<std::string> needing_repair;
        for (const auto& event : w.events) {
          if (event.judgment == Judgment::harmful) needing_repair.insert(event.skill_id);
        }
        for (const auto& id : needing_repair) {
          if (refined_this_window.count(id)) continue;
          const SkillVersion* cur = repo.current(id);
          if (!cur || (cur->stage != Stage::trial && cur->stage != Stage::active)) continue;
          refined_this_window.insert(id);
          auto revision = refine(cur->skill, cur->stage, repo.evidence_snapshot(id),
                                 repo.meta(Role::refiner), writer_client, prompts, config);
          if (!revision) continue;  // conservative: nothing changes
          const GateResult gate =
              run_bundle(revision->skill, revision->bundle, writer_client, prompts, config);
          repo.revise(id, revision->skill, revision->bundle, gate, tasks[i].id);
        }
      }
    }

    // Macro maintenance at the window barrier.
    const std::string barrier_task =
        window_end > window_start ? tasks[window_end - 1].id : "";
    writer_client.set_context(barrier_task, window);
    ++result.macro_passes;

    // Refactor the top candidate groups.
    const auto groups =
        find_candidate_groups(repo.graph(), config, embedder, config.max_candidate_groups);
    for (const auto& group : groups) {
      auto candidates = refactor(group, repo.graph(), repo.meta(Role::refactorer),
                                 writer_client, prompts, config,
                                 static_cast<int>(window_end) - 1);
      for (auto& candidate : candidates) {
        Skill skill = candidate.skill;
        TestBundle bundle = candidate.bundle;
        bundle.skill_id = skill.id;
        bundle.skill_version = skill.version;
        if (!validate_skill(skill).ok()) continue;
        // Near-duplicates of an already stored skill are skipped.
        bool duplicate = false;
        for (const auto& [id, versions] : repo.skills()) {
          const SkillVersion* cur = repo.current(id);
          if (cur && cur->skill.name == skill.name) {
            duplicate = true;
            break;
          }
        }
        if (duplicate) continue;
        const GateResult gate = run_bundle(skill, bundle, writer_client, prompts, config);
        repo.publish(std::move(skill), std::move(bundle), gate, barrier_task);
      }
    }

    // Promotion sweep: trial versions re-run their maintained bundle; pass
    // releases them, fail archives them.
    {
      std::vector<std::pair<std::string, int>> trials;
      for (const auto& [id, versions] : repo.skills()) {
        const SkillVersion* cur = repo.current(id);
        if (cur && cur->stage == Stage::trial) trials.push_back({id, cur->skill.version});
      }
      for (const auto& [id, version] : trials) {
        const SkillVersion* record = repo.find_version(id, version);
        const TestBundle* bundle = repo.find_bundle(id, version);
        const GateResult gate =
            run_bundle(record->skill, bundle ? *bundle : TestBundle{record->skill.id, version, {}},
                       writer_client, prompts, config);
        repo.apply_transition(id, version,
                              gate.passed ? LifecycleEvent::gate_pass : LifecycleEvent::gate_fail,
                              barrier_task, "promotion sweep");
      }
    }

    // Filter sweep over active versions (counters reset on revision, so the
    // table rows are exactly the per-release counts).
    {
      std::vector<std::pair<std::string, int>> to_disable;
      for (const auto& [id, versions] : repo.skills()) {
        const SkillVersion* cur = repo.current(id);
        if (!cur || cur->stage != Stage::active) continue;
        const CreditCounters* row = repo.credit().find(id, cur->skill.version);
        if (!row) continue;
        if (filter_gate(row->harmful, row->helpful, config.tau_filter, config.tau_protect)) {
          to_disable.push_back({id, cur->skill.version});
        }
      }
      for (const auto& [id, version] : to_disable) {
        repo.apply_transition(id, version, LifecycleEvent::filter_disable, barrier_task,
                              "filter gate");
      }
    }

    // Role feedback: rebuild replay rows from the latest evidence.
    for (const auto& [id, versions] : repo.skills()) {
      const SkillVersion* cur = repo.current(id);
      const SkillVersion* latest = cur ? cur : &versions.back();
      record_outcome(repo.buffer(latest->skill.source_role), latest->skill,
                     repo.evidence_snapshot(id), config,
                     static_cast<long>(window_end) - 1);
    }

    // Meta updates: one attempt per role per macro pass.
    if (meta_updates_enabled) {
      for (Role role : kAllRoles) {
        ++result.meta_update_attempts;
        const auto updated = update_role_rules(role, repo.meta(role), repo.buffer(role),
                                               config.buffer_sample_n, writer_client, prompts,
                                               config, static_cast<long>(window_end) - 1);
        repo.meta(role) = updated;
      }
    }
  }

  result.rule_history.push_back(
      {static_cast<long>(result.rule_history.size()), rules_only(snapshot_meta(repo))});
  return result;
}

EvalReport evaluate_frozen(const std::vector<DeskworldTask>& tasks, const Repository& repo,
                           ChatBackend& backend, const PromptLibrary& prompts,
                           std::optional<double> baseline_mean, bool parallel) {
  EvalReport report;
  const auto views = repo.retrieval_views();
  const RunConfig& config = repo.config();

  struct EvalWork {
    Trace trace;
    Utility utility;
    CallLog log;
  };
  std::vector<EvalWork> work(tasks.size());
  auto run_one = [&](std::size_t i) {
    ChatClient client(backend, work[i].log);
    client.set_context(tasks[i].id, -1);
    work[i].trace = execute_with_skills(tasks[i], views, config, RetrievalMode::heldout,
                                        client, prompts, default_embedder());
    work[i].utility = evaluate_trace(tasks[i], work[i].trace);
  };
  if (parallel) {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < tasks.size(); ++i) threads.emplace_back(run_one, i);
    for (auto& thread : threads) thread.join();
  } else {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
  }

  double total = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    report.log.merge(work[i].log);
    report.rows.push_back({tasks[i].id, work[i].utility.score, work[i].trace.input_tokens,
                           work[i].trace.output_tokens});
    report.input_tokens += work[i].trace.input_tokens;
    report.output_tokens += work[i].trace.output_tokens;
    total += work[i].utility.score;
    report.traces.push_back(std::move(work[i].trace));
  }
  report.mean_utility = tasks.empty() ? 0.0 : total / static_cast<double>(tasks.size());
  if (baseline_mean) {
    report.baseline_mean = baseline_mean;
    report.delta = report.mean_utility - *baseline_mean;
  }
  return report;
}

std::string report_to_json_text(const EvalReport& report) {
  json j;
  auto rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"task", row.task_id},
                    {"utility", text::format_fixed(row.utility, 6)},
                    {"in_tokens", row.input_tokens},
                    {"out_tokens", row.output_tokens}});
  }
  j["rows"] = rows;
  j["mean_utility"] = text::format_fixed(report.mean_utility, 6);
  j["in_tokens"] = report.input_tokens;
  j["out_tokens"] = report.output_tokens;
  j["total_tokens"] = report.input_tokens + report.output_tokens;
  if (report.baseline_mean) {
    j["baseline_mean"] = text::format_fixed(*report.baseline_mean, 6);
    j["delta"] = text::format_fixed(*report.delta, 6);
  }
  return j.dump(1) + "\n";
}

double report_mean_from_json_text(const std::string& json_text) {
  auto j = json::parse(json_text);
  return std::stod(j.at("mean_utility").get<std::string>());
}

std::string export_meta_rules(const Repository& repo) {
  std::string out;
  for (Role role : kAllRoles) {
    out += "[" + to_string(role) + "]\n";
    const auto& rules = repo.meta(role);
    for (std::size_t i = 0; i < rules.rules.size(); ++i) {
      out += std::to_string(i + 1) + ". " + rules.rules[i] + "\n";
    }
  }
  return out;
}

std::map<Role, std::vector<std::string>> parse_rules_text(const std::string& content) {
  std::map<Role, std::vector<std::string>> out;
  for (Role role : kAllRoles) out[role] = {};
  std::optional<Role> current;
  for (const auto& raw_line : text::split(content, '\n')) {
    const auto line = text::trim(raw_line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      auto role = parse_role(line.substr(1, line.size() - 2));
      if (!role) throw MalformedRules("malformed rules: unknown section " + line);
      current = role;
      continue;
    }
    if (!current) throw MalformedRules("malformed rules: rule before any [role] section");
    auto rule = text::normalize_rule(line);
    if (rule.empty()) continue;
    out[*current].push_back(std::move(rule));
    if (static_cast<int>(out[*current].size()) > kMaxMetaRules) {
      throw MalformedRules("malformed rules: more than " + std::to_string(kMaxMetaRules) +
                           " rules for " + to_string(*current));
    }
  }
  return out;
}

void meta_test_init(Repository& repo, const std::filesystem::path& rules_file) {
  std::ifstream in(rules_file, std::ios::binary);
  if (!in) throw MalformedRules("malformed rules: cannot read " + rules_file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto parsed = parse_rules_text(buf.str());
  for (const auto& [role, rules] : parsed) {
    auto& target = repo.meta(role);
    target.rules = rules;
    target.updated_at_task = 0;
  }
}

std::vector<std::string> audit_release_gating(const Repository& repo,
                                              const std::vector<const std::vector<Trace>*>&
                                                  trace_sets) {
  std::vector<std::string> violations;

  // Gate pass ordinals per version, from publish/revise ledger lines.
  std::map<std::pair<std::string, int>, long> passed_at;
  for (const auto& line : repo.lifecycle_ledger()) {
    if ((line.kind == "publish" || line.kind == "revise") && line.gate_passed) {
      passed_at[{line.skill_id, line.skill_version}] = line.ordinal;
    }
  }

  auto check = [&](const std::string& id, int version, const std::string& where,
                   std::optional<long> ordinal) {
    auto it = passed_at.find({id, version});
    if (it == passed_at.end()) {
      violations.push_back(where + ": " + id + "@v" + std::to_string(version) +
                           " exposed without any passed gate");
      return;
    }
    if (ordinal && it->second > *ordinal) {
      violations.push_back(where + ": " + id + "@v" + std::to_string(version) +
                           " exposed at ordinal " + std::to_string(*ordinal) +
                           " before its gate passed at " + std::to_string(it->second));
    }
  };

  for (const auto& line : repo.lifecycle_ledger()) {
    if (line.kind == "exposure") {
      check(line.skill_id, line.skill_version, "ledger", line.ordinal);
    }
  }
  for (const auto& line : repo.credit_ledger()) {
    check(line.skill_id, line.skill_version, "credit ledger", line.ordinal);
  }
  for (const auto* traces : trace_sets) {
    for (const auto& trace : *traces) {
      for (const auto& record : trace.retrieval) {
        for (const auto& ref : record.exposed) {
          const auto at = ref.find("@v");
          if (at == std::string::npos) continue;
          check(ref.substr(0, at), std::stoi(ref.substr(at + 2)),
                "trace " + trace.task_id, std::nullopt);
        }
      }
    }
  }
  return violations;
}

}  // namespace skevo
