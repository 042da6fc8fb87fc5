#include "skevo/overlap_graph.hpp"

#include <algorithm>
#include <cmath>

#include "skevo/parsing.hpp"
#include "skevo/text.hpp"

namespace skevo {

std::string to_string(OutcomeTag t) {
  switch (t) {
    case OutcomeTag::success: return "success";
    case OutcomeTag::failure: return "failure";
    case OutcomeTag::partial: return "partial";
  }
  return "partial";
}

std::string to_string(PuritySignal p) {
  switch (p) {
    case PuritySignal::shared_tools: return "shared_tools";
    case PuritySignal::shared_precondition_failure: return "shared_precondition_failure";
    case PuritySignal::shared_argument_pattern: return "shared_argument_pattern";
    case PuritySignal::aligned_task_structure: return "aligned_task_structure";
  }
  return "shared_tools";
}

namespace {

// Segmentation key: tool family of the turn's call, or the error-episode
// marker for turns without a parsable call.
std::string turn_key(const TraceStep& step) {
  auto call = parse_tool_call(step.action);
  if (!call || call->name == "noop") return "!episode";
  return tool_family(call->name);
}

OutcomeTag outcome_of(const Utility& utility) {
  if (utility.score >= 1.0) return OutcomeTag::success;
  if (utility.score <= 0.0) return OutcomeTag::failure;
  return OutcomeTag::partial;
}

}  // namespace

std::vector<Segment> project(const Trace& trace, const Utility& utility,
                             const RunConfig& config) {
  std::vector<Segment> segments;
  const auto outcome = outcome_of(utility);
  std::size_t i = 0;
  while (i < trace.steps.size()) {
    const std::string key = turn_key(trace.steps[i]);
    std::size_t j = i;
    while (j < trace.steps.size() && turn_key(trace.steps[j]) == key) ++j;

    Segment seg;
    seg.source_task_id = trace.task_id;
    seg.span_begin = static_cast<int>(i);
    seg.span_end = static_cast<int>(j - 1);
    seg.id = trace.task_id + "#" + std::to_string(seg.span_begin) + "-" +
             std::to_string(seg.span_end);
    seg.outcome = outcome;
    std::string fragment;
    for (std::size_t k = i; k < j; ++k) {
      const auto& step = trace.steps[k];
      fragment += step.action + " -> " + step.observation + "\n";
      if (auto call = parse_tool_call(step.action); call && call->name != "noop") {
        seg.tool_calls.push_back(render_call(*call));
      }
      if (step.error) seg.error_texts.push_back(step.observation);
    }
    seg.fragment_text =
        text::truncate_bytes(fragment, static_cast<std::size_t>(config.fragment_limit));
    segments.push_back(std::move(seg));
    i = j;
  }
  return segments;
}

GraphNode node_from_segment(const Segment& segment, long task_ordinal) {
  GraphNode node;
  node.id = segment.id;
  node.kind = NodeKind::segment;
  node.text = segment.fragment_text;
  node.tool_calls = segment.tool_calls;
  node.error_texts = segment.error_texts;
  node.provenance = segment.source_task_id;
  node.task_ordinal = task_ordinal;
  return node;
}

GraphNode node_from_skill(const Skill& skill, const RunConfig& config) {
  GraphNode node;
  node.id = "skill:" + skill.id;
  node.kind = NodeKind::skill_summary;
  node.text = skill.name + " " + skill.description + " " +
              text::join(skill.trigger_conditions, " ") + " " +
              text::truncate_bytes(skill.body, static_cast<std::size_t>(config.fragment_limit));
  for (const auto& tool : skill.allowed_tools) {
    node.tool_calls.push_back(tool + "()");
  }
  node.provenance = skill.id;
  node.task_ordinal = -1;
  return node;
}

double combine_edge(double sparse, double emb, double err, const RunConfig& config) {
  return config.alpha * sparse + config.beta * emb + config.gamma * err;
}

namespace {

std::set<std::string> error_grams(const GraphNode& node) {
  std::set<std::string> grams;
  for (const auto& err : node.error_texts) {
    auto g = text::word_trigrams(err);
    grams.insert(g.begin(), g.end());
  }
  return grams;
}

}  // namespace

EdgeBreakdown edge_weight(const GraphNode& u, const GraphNode& v, const RunConfig& config,
                          const Embedder& embedder) {
  EdgeBreakdown b;
  b.sparse = text::jaccard(text::word_trigrams(u.text), text::word_trigrams(v.text));
  b.emb = std::clamp(cosine(embedder.embed(u.text), embedder.embed(v.text)), 0.0, 1.0);
  b.err = std::min(1.0, kErrorOverlapWeight * text::jaccard(error_grams(u), error_grams(v)));
  b.weight = combine_edge(b.sparse, b.emb, b.err, config);
  return b;
}

bool OverlapGraph::adjacent(const std::string& a, const std::string& b) const {
  return weight(a, b).has_value();
}

std::optional<double> OverlapGraph::weight(const std::string& a, const std::string& b) const {
  auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  auto it = edges_.find(key);
  if (it == edges_.end()) return std::nullopt;
  return it->second;
}

void OverlapGraph::clear() {
  nodes_.clear();
  edges_.clear();
  task_counter_ = 0;
}

void update_graph(OverlapGraph& graph, const std::vector<Segment>& new_segments,
                  const std::vector<Skill>& skills, const RunConfig& config,
                  const Embedder& embedder) {
  const long ordinal = graph.task_counter_++;

  // Drop segment nodes that fell out of the sliding window.
  const long cutoff = graph.task_counter_ - config.segment_window_tasks;
  for (auto it = graph.nodes_.begin(); it != graph.nodes_.end();) {
    if (it->second.kind == NodeKind::segment && it->second.task_ordinal < cutoff) {
      it = graph.nodes_.erase(it);
    } else {
      ++it;
    }
  }

  // Skill-summary nodes mirror the current non-archived skill set exactly.
  for (auto it = graph.nodes_.begin(); it != graph.nodes_.end();) {
    if (it->second.kind == NodeKind::skill_summary) {
      it = graph.nodes_.erase(it);
    } else {
      ++it;
    }
  }
  for (const auto& skill : skills) {
    auto node = node_from_skill(skill, config);
    graph.nodes_[node.id] = std::move(node);
  }
  for (const auto& segment : new_segments) {
    auto node = node_from_segment(segment, ordinal);
    graph.nodes_[node.id] = std::move(node);
  }

  // Recompute the full thresholded edge set; sub-threshold pairs are stored
  // nowhere, so a rebuild from raw nodes reproduces the graph exactly.
  graph.edges_.clear();
  std::vector<const GraphNode*> all;
  all.reserve(graph.nodes_.size());
  for (const auto& [id, node] : graph.nodes_) all.push_back(&node);
  for (std::size_t a = 0; a < all.size(); ++a) {
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      const auto breakdown = edge_weight(*all[a], *all[b], config, embedder);
      if (breakdown.weight >= config.eta) {
        graph.edges_[{all[a]->id, all[b]->id}] = breakdown.weight;
      }
    }
  }
}

std::optional<PuritySignal> detect_purity(const std::vector<const GraphNode*>& members,
                                          const Embedder& embedder) {
  if (members.empty()) return std::nullopt;

  // shared_precondition_failure: a common error gram across every member.
  {
    bool all_have_errors = true;
    std::set<std::string> common;
    bool first = true;
    for (const auto* m : members) {
      auto grams = error_grams(*m);
      if (grams.empty()) {
        all_have_errors = false;
        break;
      }
      if (first) {
        common = std::move(grams);
        first = false;
      } else {
        std::set<std::string> next;
        std::set_intersection(common.begin(), common.end(), grams.begin(), grams.end(),
                              std::inserter(next, next.begin()));
        common = std::move(next);
      }
    }
    if (all_have_errors && !common.empty()) {
      return PuritySignal::shared_precondition_failure;
    }
  }

  // shared_tools: some tool name called by every member.
  {
    std::set<std::string> common;
    bool first = true;
    for (const auto* m : members) {
      std::set<std::string> names;
      for (const auto& call_text : m->tool_calls) {
        if (auto call = parse_tool_call(call_text)) names.insert(call->name);
      }
      if (names.empty()) {
        common.clear();
        break;
      }
      if (first) {
        common = std::move(names);
        first = false;
      } else {
        std::set<std::string> next;
        std::set_intersection(common.begin(), common.end(), names.begin(), names.end(),
                              std::inserter(next, next.begin()));
        common = std::move(next);
      }
    }
    if (!common.empty()) return PuritySignal::shared_tools;
  }

  // shared_argument_pattern: some argument name bound by every member.
  {
    std::set<std::string> common;
    bool first = true;
    for (const auto* m : members) {
      std::set<std::string> arg_names;
      for (const auto& call_text : m->tool_calls) {
        if (auto call = parse_tool_call(call_text)) {
          for (const auto& [k, v] : call->args) arg_names.insert(k);
        }
      }
      if (arg_names.empty()) {
        common.clear();
        break;
      }
      if (first) {
        common = std::move(arg_names);
        first = false;
      } else {
        std::set<std::string> next;
        std::set_intersection(common.begin(), common.end(), arg_names.begin(), arg_names.end(),
                              std::inserter(next, next.begin()));
        common = std::move(next);
      }
    }
    if (!common.empty()) return PuritySignal::shared_argument_pattern;
  }

  // aligned_task_structure: pairwise embedding similarity of all fragments
  // at or above 0.6.
  {
    bool aligned = true;
    std::vector<std::vector<float>> vecs;
    vecs.reserve(members.size());
    for (const auto* m : members) vecs.push_back(embedder.embed(m->text));
    for (std::size_t a = 0; a < members.size() && aligned; ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        if (std::clamp(cosine(vecs[a], vecs[b]), 0.0, 1.0) < 0.6) {
          aligned = false;
          break;
        }
      }
    }
    if (aligned) return PuritySignal::aligned_task_structure;
  }

  return std::nullopt;
}

namespace {

struct CliqueSearch {
  const OverlapGraph& graph;
  std::vector<std::string> ids;
  int cap;
  std::vector<std::vector<std::string>> found;

  void run() {
    std::vector<std::string> r, p = ids, x;
    expand(r, p, x);
  }

  std::vector<std::string> neighbors_in(const std::string& v,
                                        const std::vector<std::string>& set) const {
    std::vector<std::string> out;
    for (const auto& u : set) {
      if (u != v && graph.adjacent(u, v)) out.push_back(u);
    }
    return out;
  }

  void expand(std::vector<std::string>& r, std::vector<std::string> p,
              std::vector<std::string> x) {
    // Any maximal clique extending past the cap is filtered out later, so
    // the branch can stop as soon as R exceeds it.
    if (static_cast<int>(r.size()) > cap) return;
    if (p.empty() && x.empty()) {
      found.push_back(r);
      return;
    }
    // Pivot on the candidate with the most neighbors in P.
    std::string pivot;
    std::size_t best = 0;
    bool have_pivot = false;
    for (const auto& candidate : p) {
      auto n = neighbors_in(candidate, p).size();
      if (!have_pivot || n > best) {
        pivot = candidate;
        best = n;
        have_pivot = true;
      }
    }
    for (const auto& candidate : x) {
      auto n = neighbors_in(candidate, p).size();
      if (!have_pivot || n > best) {
        pivot = candidate;
        best = n;
        have_pivot = true;
      }
    }
    std::vector<std::string> frontier;
    for (const auto& v : p) {
      if (!have_pivot || !graph.adjacent(pivot, v)) frontier.push_back(v);
    }
    for (const auto& v : frontier) {
      r.push_back(v);
      expand(r, neighbors_in(v, p), neighbors_in(v, x));
      r.pop_back();
      p.erase(std::find(p.begin(), p.end(), v));
      x.push_back(v);
    }
  }
};

}  // namespace

std::vector<CandidateGroup> find_candidate_groups(const OverlapGraph& graph,
                                                  const RunConfig& config,
                                                  const Embedder& embedder, int max_groups) {
  CliqueSearch search{graph, {}, config.clique_max, {}};
  for (const auto& [id, node] : graph.nodes()) search.ids.push_back(id);
  search.run();

  std::vector<CandidateGroup> groups;
  for (auto& members : search.found) {
    const int size = static_cast<int>(members.size());
    if (size < config.clique_min || size > config.clique_max) continue;
    std::sort(members.begin(), members.end());

    std::vector<const GraphNode*> nodes;
    std::set<std::string> tasks;
    bool has_skill_node = false;
    for (const auto& id : members) {
      const auto& node = graph.nodes().at(id);
      nodes.push_back(&node);
      if (node.kind == NodeKind::skill_summary) {
        has_skill_node = true;
      } else {
        tasks.insert(node.provenance);
      }
    }
    if (!has_skill_node && tasks.size() < 2) continue;

    auto purity = detect_purity(nodes, embedder);
    if (!purity) continue;

    CandidateGroup group;
    group.members = members;
    group.purity = *purity;
    group.distinct_source_tasks = static_cast<int>(tasks.size());
    group.is_skill_revision_group = has_skill_node;
    double total = 0.0;
    int edges = 0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        total += graph.weight(members[a], members[b]).value_or(0.0);
        ++edges;
      }
    }
    group.mean_weight = edges == 0 ? 0.0 : total / edges;
    groups.push_back(std::move(group));
  }

  std::sort(groups.begin(), groups.end(), [](const CandidateGroup& a, const CandidateGroup& b) {
    if (a.mean_weight != b.mean_weight) return a.mean_weight > b.mean_weight;
    return a.members < b.members;
  });
  if (max_groups >= 0 && groups.size() > static_cast<std::size_t>(max_groups)) {
    groups.resize(static_cast<std::size_t>(max_groups));
  }
  return groups;
}

}  // namespace skevo
