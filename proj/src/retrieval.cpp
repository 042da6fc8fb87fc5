#include "skevo/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "skevo/text.hpp"

namespace skevo {

std::string render_query(const RetrievalQuery& q) {
  std::string out;
  out += "request: " + q.request_text + "\n";
  out += "state: " + q.dialogue_state_digest + "\n";
  for (const auto& err : q.recent_tool_errors) {
    out += "error: " + err + "\n";
  }
  out += "previous: " + q.previous_assistant_digest + "\n";
  return out;
}

RetrievalQuery build_query(const TaskContext& context, int turn_index,
                           const Trace& trace_so_far, const RunConfig& config) {
  const auto limit = static_cast<std::size_t>(config.query_digest_limit);
  RetrievalQuery q;
  q.request_text = context.turn_request;

  std::string state = context.instruction;
  // Most recent pairs first so truncation keeps the freshest context.
  for (auto it = trace_so_far.steps.rbegin(); it != trace_so_far.steps.rend(); ++it) {
    state += " | " + it->action + " -> " + it->observation;
    if (state.size() > limit) break;
  }
  q.dialogue_state_digest = text::truncate_bytes(state, limit);

  for (const auto& step : trace_so_far.steps) {
    if (step.error) q.recent_tool_errors.push_back(text::truncate_bytes(step.observation, limit));
  }
  if (!trace_so_far.steps.empty()) {
    q.previous_assistant_digest =
        text::truncate_bytes(trace_so_far.steps.back().action, limit);
  }
  (void)turn_index;

  std::string all_text = q.request_text + "\n" + q.dialogue_state_digest + "\n" +
                         q.previous_assistant_digest;
  for (const auto& err : q.recent_tool_errors) all_text += "\n" + err;
  for (const auto& tool : context.tool_names) {
    if (text::contains(all_text, tool)) q.tool_mentions.push_back(tool);
  }
  std::sort(q.tool_mentions.begin(), q.tool_mentions.end());
  return q;
}

ScoreWeights ScoreWeights::from_config(const RunConfig& config) {
  return ScoreWeights{config.lambda_sparse, config.lambda_emb, config.lambda_tool,
                      config.lambda_trust};
}

namespace {

std::string skill_header_text(const SkillRetrievalView& v) {
  return v.name + " " + v.description + " " + text::join(v.trigger_conditions, " ");
}

std::string skill_view_text(const SkillRetrievalView& v) {
  return skill_header_text(v) + " " + v.body_summary;
}

void check_weights(const ScoreWeights& w) {
  if (w.sparse < 0 || w.emb < 0 || w.tool < 0 || w.trust < 0) {
    throw InvalidWeights("invalid_weights: negative component weight");
  }
  const double sum = w.sparse + w.emb + w.tool + w.trust;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidWeights("invalid_weights: weights must sum to 1, got " +
                         text::format_fixed(sum, 6));
  }
}

}  // namespace

double sparse_overlap(const RetrievalQuery& q, const SkillRetrievalView& v) {
  return text::jaccard(text::word_trigrams(q.request_text),
                       text::word_trigrams(skill_header_text(v)));
}

double embedding_similarity(const RetrievalQuery& q, const SkillRetrievalView& v,
                            const Embedder& embedder) {
  const double c = cosine(embedder.embed(render_query(q)), embedder.embed(skill_view_text(v)));
  return std::clamp(c, 0.0, 1.0);
}

double tool_compatibility(const RetrievalQuery& q, const SkillRetrievalView& v) {
  if (v.allowed_tools.empty()) return 0.5;  // tool-agnostic skills score neutral
  if (q.tool_mentions.empty()) return 0.0;
  long inter = 0;
  for (const auto& tool : q.tool_mentions) {
    if (v.allowed_tools.count(tool)) ++inter;
  }
  return static_cast<double>(inter) /
         static_cast<double>(std::max<std::size_t>(1, q.tool_mentions.size()));
}

double trust_score(const TrustInputs& trust) {
  double value = static_cast<double>(trust.helpful + 1) /
                 static_cast<double>(trust.helpful + trust.harmful + 2);
  if (trust.state == Stage::trial) value *= 0.5;
  return value;
}

double combine(const ScoreBreakdown& components, const ScoreWeights& weights) {
  check_weights(weights);
  return weights.sparse * components.sparse + weights.emb * components.emb +
         weights.tool * components.tool + weights.trust * components.trust;
}

ScoreBreakdown score(const RetrievalQuery& q, const SkillRetrievalView& v,
                     const ScoreWeights& weights, const Embedder& embedder) {
  check_weights(weights);
  ScoreBreakdown b;
  b.sparse = sparse_overlap(q, v);
  b.emb = embedding_similarity(q, v, embedder);
  b.tool = tool_compatibility(q, v);
  b.trust = trust_score(v.trust);
  b.total = combine(b, weights);
  return b;
}

std::vector<RankedSkill> select_top_k(const RetrievalQuery& q,
                                      const std::vector<SkillRetrievalView>& snapshot, int k,
                                      RetrievalMode mode, const ScoreWeights& weights,
                                      const Embedder& embedder) {
  check_weights(weights);
  std::vector<RankedSkill> eligible;
  for (const auto& view : snapshot) {
    if (view.trust.state == Stage::disabled || view.trust.state == Stage::archived) continue;
    if (view.trust.state == Stage::trial && mode == RetrievalMode::heldout) continue;
    eligible.push_back({view, score(q, view, weights, embedder)});
  }
  auto rank_of = [](Stage s) { return s == Stage::active ? 0 : 1; };
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](const RankedSkill& a, const RankedSkill& b) {
                     const int ra = rank_of(a.view.trust.state);
                     const int rb = rank_of(b.view.trust.state);
                     if (ra != rb) return ra < rb;
                     if (a.breakdown.total != b.breakdown.total) {
                       return a.breakdown.total > b.breakdown.total;
                     }
                     if (a.breakdown.trust != b.breakdown.trust) {
                       return a.breakdown.trust > b.breakdown.trust;
                     }
                     return a.view.id < b.view.id;
                   });
  if (k < 0) k = 0;
  if (eligible.size() > static_cast<std::size_t>(k)) {
    eligible.resize(static_cast<std::size_t>(k));
  }
  return eligible;
}

std::string render_skill_block(const SkillRetrievalView& v) {
  std::string out;
  out += "[[skill " + v.version_ref() + " name=\"" + v.name + "\"]]\n";
  out += "trigger: " + text::join(v.trigger_conditions, "; ") + "\n";
  std::vector<std::string> tools(v.allowed_tools.begin(), v.allowed_tools.end());
  out += "tools: " + text::join(tools, ", ") + "\n";
  out += v.body + "\n";
  out += "[[/skill]]\n";
  return out;
}

std::string render_skill_blocks(const std::vector<RankedSkill>& ranked) {
  std::string out;
  for (const auto& r : ranked) {
    out += render_skill_block(r.view);
  }
  return out;
}

}  // namespace skevo
