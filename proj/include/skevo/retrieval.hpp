#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "skevo/config.hpp"
#include "skevo/oracle.hpp"
#include "skevo/skill.hpp"
#include "skevo/trace.hpp"

namespace skevo {

struct InvalidWeights : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-turn retrieval query assembled from the current request, dialogue
// state, recent tool errors, and the previous assistant message.
struct RetrievalQuery {
  std::string request_text;
  std::string dialogue_state_digest;
  std::vector<std::string> recent_tool_errors;
  std::string previous_assistant_digest;
  // Tool names from the task context that appear in the texts above.
  std::vector<std::string> tool_mentions;
};

std::string render_query(const RetrievalQuery& q);

RetrievalQuery build_query(const TaskContext& context, int turn_index,
                           const Trace& trace_so_far, const RunConfig& config);

struct TrustInputs {
  long helpful = 0;
  long harmful = 0;
  long exposed = 0;
  Stage state = Stage::active;
};

// Compact per-skill view used for scoring and prompt rendering.
struct SkillRetrievalView {
  std::string id;
  int version = 1;
  std::string name;
  std::string description;
  std::vector<std::string> trigger_conditions;
  std::set<std::string> allowed_tools;
  std::set<std::string> domains;
  std::string body_summary;
  std::string body;  // full text, injected into the executor prompt
  TrustInputs trust;

  std::string version_ref() const { return id + "@v" + std::to_string(version); }
};

struct ScoreWeights {
  double sparse = 0.30;
  double emb = 0.40;
  double tool = 0.20;
  double trust = 0.10;

  static ScoreWeights from_config(const RunConfig& config);
};

struct ScoreBreakdown {
  double sparse = 0.0;
  double emb = 0.0;
  double tool = 0.0;
  double trust = 0.0;
  double total = 0.0;
};

// Component scorers, each in [0,1].
double sparse_overlap(const RetrievalQuery& q, const SkillRetrievalView& v);
double embedding_similarity(const RetrievalQuery& q, const SkillRetrievalView& v,
                            const Embedder& embedder);
double tool_compatibility(const RetrievalQuery& q, const SkillRetrievalView& v);
double trust_score(const TrustInputs& trust);

// Weighted mixture; weights must be non-negative and sum to 1.
double combine(const ScoreBreakdown& components, const ScoreWeights& weights);
ScoreBreakdown score(const RetrievalQuery& q, const SkillRetrievalView& v,
                     const ScoreWeights& weights, const Embedder& embedder);

enum class RetrievalMode { training, heldout };

struct RankedSkill {
  SkillRetrievalView view;
  ScoreBreakdown breakdown;
};

// Held-out mode exposes active skills only; training mode ranks active
// skills strictly ahead of trial ones. Disabled and archived skills are
// never returned. Ties break by higher trust, then lexicographic id.
std::vector<RankedSkill> select_top_k(const RetrievalQuery& q,
                                      const std::vector<SkillRetrievalView>& snapshot, int k,
                                      RetrievalMode mode, const ScoreWeights& weights,
                                      const Embedder& embedder);

// Bit-exact prompt block for one exposed skill; executor prompts are
// replay-stable because this format never varies.
std::string render_skill_block(const SkillRetrievalView& view);
std::string render_skill_blocks(const std::vector<RankedSkill>& ranked);

}  // namespace skevo
