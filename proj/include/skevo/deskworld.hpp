#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skevo/oracle.hpp"
#include "skevo/parsing.hpp"
#include "skevo/trace.hpp"

namespace skevo {

// Desk-scale multi-turn tool-use benchmark with constructed ground truth:
// hidden argument bindings that only skills can supply, derived bindings
// revealed by earlier observations, precondition orderings, and distractor
// tools. Every task is solvable by a fixed executor contract, so utility
// deltas are analytic rather than stochastic.

struct ToolSpec {
  std::string name;  // "<family>_<verb>"; the family is the prefix
  std::string description;
};

enum class BindingKind {
  literal,  // value present in the turn request
  derived,  // value revealed by an earlier observation in the same task
  hidden    // value available only from training exposure (i.e. a skill)
};

struct CallArg {
  std::string name;
  std::string value;
  BindingKind binding = BindingKind::literal;
};

struct ExpectedCall {
  std::string tool;
  std::vector<CallArg> args;
};

std::string render_expected(const ExpectedCall& call);  // canonical call text

struct TaskTurn {
  std::string request;
  ExpectedCall expected;
  std::string observation;  // returned on a matching call
};

struct DeskworldTask {
  std::string id;
  std::string family;
  std::string archetype;  // plain | derived | easy | meta | ordering | harmful
  std::string instruction;
  std::vector<ToolSpec> tools;
  std::vector<TaskTurn> turns;
};

// Everything a fully offline run needs: tasks plus the scripted role
// behaviors that realize the executor contract and the constructed
// extraction/credit/refinement story.
struct TaskPack {
  unsigned long long seed = 0;
  int families = 0;
  std::vector<DeskworldTask> train;
  std::vector<DeskworldTask> heldout;
  std::vector<std::string> transfer_families;  // solvable only via meta-unlocked skills
  std::vector<ScriptedRule> rules;
  std::map<RoleTag, std::string> defaults;
};

TaskPack generate_task_pack(int families, unsigned long long seed);

void save_task_pack(const TaskPack& pack, const std::filesystem::path& path);
TaskPack load_task_pack(const std::filesystem::path& path);

// Scripted backend realizing the pack's role behaviors. The executor rule
// for each turn fires only when every non-trivial binding value is visible
// in the prompt (task text, prior observations, or a rendered skill).
std::unique_ptr<ScriptedBackend> make_scripted_backend(const TaskPack& pack);

class DeskworldEnv {
 public:
  explicit DeskworldEnv(const DeskworldTask& task) : task_(&task) {}

  int total_turns() const { return static_cast<int>(task_->turns.size()); }

  struct StepResult {
    std::string observation;
    bool error = false;
    bool matched = false;
  };

  StepResult step(int turn, const std::optional<ParsedCall>& action) const;

  TaskContext context(int turn) const;

 private:
  const DeskworldTask* task_;
};

// The meta rule that unlocks strong extraction on meta-archetype families;
// scripted runs key on its exact text.
const std::string& deskworld_meta_rule();

}  // namespace skevo
