#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "skevo/config.hpp"
#include "skevo/oracle.hpp"
#include "skevo/skill.hpp"
#include "skevo/trace.hpp"

namespace skevo {

enum class OutcomeTag { success, failure, partial };
std::string to_string(OutcomeTag t);

// Maximal run of trace turns sharing a tool family (turns without a
// parsable tool call group into error episodes).
struct Segment {
  std::string id;  // "<task>#<begin>-<end>"
  std::string source_task_id;
  int span_begin = 0;
  int span_end = 0;  // inclusive
  std::string fragment_text;
  std::vector<std::string> tool_calls;  // full call texts
  std::vector<std::string> error_texts;
  OutcomeTag outcome = OutcomeTag::partial;
};

std::vector<Segment> project(const Trace& trace, const Utility& utility,
                             const RunConfig& config);

enum class NodeKind { segment, skill_summary };

struct GraphNode {
  std::string id;
  NodeKind kind = NodeKind::segment;
  std::string text;
  std::vector<std::string> tool_calls;
  std::vector<std::string> error_texts;
  std::string provenance;  // source task id or skill id
  long task_ordinal = -1;  // window position; -1 for skill nodes
};

GraphNode node_from_segment(const Segment& segment, long task_ordinal);
GraphNode node_from_skill(const Skill& skill, const RunConfig& config);

struct EdgeBreakdown {
  double sparse = 0.0;
  double emb = 0.0;
  double err = 0.0;
  double weight = 0.0;
};

// w(u,v) = alpha*sparse + beta*emb + gamma*err with err capped at 1 after
// the internal error-overlap weight of 1.7.
inline constexpr double kErrorOverlapWeight = 1.7;
double combine_edge(double sparse, double emb, double err, const RunConfig& config);
EdgeBreakdown edge_weight(const GraphNode& u, const GraphNode& v, const RunConfig& config,
                          const Embedder& embedder);

// Undirected weighted graph over segments and skill summaries. Only edges
// with weight >= eta are stored; there are no self-edges.
class OverlapGraph {
 public:
  const std::map<std::string, GraphNode>& nodes() const { return nodes_; }
  const std::map<std::pair<std::string, std::string>, double>& edges() const { return edges_; }

  bool adjacent(const std::string& a, const std::string& b) const;
  std::optional<double> weight(const std::string& a, const std::string& b) const;
  long task_counter() const { return task_counter_; }

  void clear();

 private:
  friend void update_graph(OverlapGraph&, const std::vector<Segment>&,
                           const std::vector<Skill>&, const RunConfig&, const Embedder&);
  friend struct GraphCodec;

  std::map<std::string, GraphNode> nodes_;
  std::map<std::pair<std::string, std::string>, double> edges_;
  long task_counter_ = 0;
};

// Snapshot round-trip (implemented next to the repository serialization).
struct GraphCodec {
  static void load(OverlapGraph& graph, const std::string& json_text);
};

// Registers one task's segments, refreshes the skill-summary nodes to the
// given set, prunes segments older than the sliding window, and recomputes
// the thresholded edge set.
void update_graph(OverlapGraph& graph, const std::vector<Segment>& new_segments,
                  const std::vector<Skill>& skills, const RunConfig& config,
                  const Embedder& embedder);

enum class PuritySignal {
  shared_tools,
  shared_precondition_failure,
  shared_argument_pattern,
  aligned_task_structure
};
std::string to_string(PuritySignal p);

struct CandidateGroup {
  std::vector<std::string> members;  // node ids, sorted
  PuritySignal purity = PuritySignal::shared_tools;
  int distinct_source_tasks = 0;
  bool is_skill_revision_group = false;
  double mean_weight = 0.0;
};

// Detection order (first match wins): shared_precondition_failure,
// shared_tools, shared_argument_pattern, aligned_task_structure. Returns
// nullopt when no signal holds; such groups are rejected.
std::optional<PuritySignal> detect_purity(const std::vector<const GraphNode*>& members,
                                          const Embedder& embedder);

// Maximal cliques (exact Bron-Kerbosch enumeration, branches abandoned once
// past clique_max) with clique_min <= size <= clique_max, spanning at least
// two distinct source tasks unless the group contains a skill node, and
// carrying a detected purity signal. Ranked by mean internal edge weight;
// max_groups < 0 returns all.
std::vector<CandidateGroup> find_candidate_groups(const OverlapGraph& graph,
                                                  const RunConfig& config,
                                                  const Embedder& embedder, int max_groups);

}  // namespace skevo
