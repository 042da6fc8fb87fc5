#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skevo/deskworld.hpp"
#include "skevo/oracle.hpp"
#include "skevo/prompts.hpp"
#include "skevo/store.hpp"
#include "skevo/trace.hpp"

namespace skevo {

struct MalformedRules : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Skill-conditioned execution: per turn, build the query, select the top-K
// exposable skills, render them into the native prompt, make one executor
// call, and append the (action, observation) pair. Executor parse failures
// become no-op actions with error observations; the loop continues.
Trace execute_with_skills(const DeskworldTask& task,
                          const std::vector<SkillRetrievalView>& snapshot,
                          const RunConfig& config, RetrievalMode mode, ChatClient& client,
                          const PromptLibrary& prompts, const Embedder& embedder);

// F1-style blend of expected-call recall and emitted-call precision under
// exact matching of names and bound arguments (order-preserving alignment).
Utility evaluate_trace(const DeskworldTask& task, const Trace& trace);

struct TrainOptions {
  bool static_mode = false;  // disable online meta updates
  bool freeze_meta = false;  // keep injected rules fixed (implies no updates)
  bool parallel = false;     // run each macro window's tasks concurrently
  std::optional<std::map<Role, std::vector<std::string>>> init_meta;
};

struct WindowRules {
  long window = 0;
  std::map<Role, std::vector<std::string>> rules;  // rules in force during the window
};

struct TrainResult {
  Repository repo;
  std::vector<Trace> traces;
  std::vector<Utility> utilities;
  CallLog log;
  std::vector<WindowRules> rule_history;
  long meta_update_attempts = 0;
  long macro_passes = 0;
  std::vector<std::string> task_failures;
};

// Online training loop. Tasks inside one macro window execute against a
// frozen store snapshot (serially or concurrently); the single writer
// drains all mutations at the window barrier in task order, then runs macro
// maintenance, role feedback, and the per-role meta updates.
TrainResult run_training(const std::vector<DeskworldTask>& tasks, const RunConfig& config,
                         ChatBackend& backend, const PromptLibrary& prompts,
                         const TrainOptions& options = {});

struct EvalRow {
  std::string task_id;
  double utility = 0.0;
  long input_tokens = 0;
  long output_tokens = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_utility = 0.0;
  long input_tokens = 0;
  long output_tokens = 0;
  std::optional<double> baseline_mean;
  std::optional<double> delta;  // empirical improvement over the no-skill baseline
  std::vector<Trace> traces;
  CallLog log;
};

// Frozen evaluation over an immutable snapshot: held-out mode, no store
// mutation of any kind, tasks evaluated concurrently.
EvalReport evaluate_frozen(const std::vector<DeskworldTask>& tasks, const Repository& repo,
                           ChatBackend& backend, const PromptLibrary& prompts,
                           std::optional<double> baseline_mean = std::nullopt,
                           bool parallel = true);

std::string report_to_json_text(const EvalReport& report);
double report_mean_from_json_text(const std::string& json_text);

// Rules-file round trip for the meta-test flow. The file carries one
// [role] section per role with numbered lines, at most five per role.
std::string export_meta_rules(const Repository& repo);
std::map<Role, std::vector<std::string>> parse_rules_text(const std::string& content);

// Replaces the repository's meta sets from an exported rules file; the
// follow-up run must be started with meta updates disabled.
void meta_test_init(Repository& repo, const std::filesystem::path& rules_file);

// Release-gating audit: every exposure recorded in the ledgers, plus every
// exposure in the given traces, must reference a version whose gate passed
// at publish/revise time. Returns violations.
std::vector<std::string> audit_release_gating(const Repository& repo,
                                              const std::vector<const std::vector<Trace>*>&
                                                  trace_sets);

}  // namespace skevo
