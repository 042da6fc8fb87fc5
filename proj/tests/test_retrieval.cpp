#include <algorithm>

#include "doctest.h"
#include "skevo/retrieval.hpp"
#include "support/helpers.hpp"

using namespace skevo;
using namespace skevo::testing;

namespace {

SkillRetrievalView make_view(const std::string& id, Stage state = Stage::active) {
  SkillRetrievalView v;
  v.id = id;
  v.version = 1;
  v.name = "skill " + id;
  v.description = "does things for " + id;
  v.trigger_conditions = {"use " + id};
  v.body = "body of " + id;
  v.body_summary = v.body;
  v.trust.state = state;
  return v;
}

RetrievalQuery make_query(const std::string& request) {
  RetrievalQuery q;
  q.request_text = request;
  return q;
}

const ScoreWeights kWeights{};  // spec defaults 0.30/0.40/0.20/0.10

// Selection oracle: score everything eligible, full sort, truncate.
std::vector<std::string> brute_force_top_k(const RetrievalQuery& q,
                                           const std::vector<SkillRetrievalView>& snapshot,
                                           int k, RetrievalMode mode) {
  struct Row {
    std::string id;
    int priority;
    double total;
    double trust;
  };
  std::vector<Row> rows;
  for (const auto& view : snapshot) {
    if (view.trust.state == Stage::disabled || view.trust.state == Stage::archived) continue;
    if (mode == RetrievalMode::heldout && view.trust.state != Stage::active) continue;
    auto b = score(q, view, kWeights, default_embedder());
    rows.push_back({view.id, view.trust.state == Stage::active ? 0 : 1, b.total, b.trust});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    if (a.total != b.total) return a.total > b.total;
    if (a.trust != b.trust) return a.trust > b.trust;
    return a.id < b.id;
  });
  std::vector<std::string> ids;
  for (const auto& row : rows) {
    if (static_cast<int>(ids.size()) >= k) break;
    ids.push_back(row.id);
  }
  return ids;
}

std::vector<std::string> selected_ids(const std::vector<RankedSkill>& ranked) {
  std::vector<std::string> ids;
  for (const auto& r : ranked) ids.push_back(r.view.id);
  return ids;
}

}  // namespace

TEST_CASE("build_query: first turn has no history and no errors") {
  TaskContext ctx{"t-1", "handle the desk queue", {"desk_check"}, "check the queue"};
  Trace trace;
  trace.task_id = "t-1";
  RunConfig config;
  auto q = build_query(ctx, 0, trace, config);
  CHECK(q.request_text == "check the queue");
  CHECK(q.recent_tool_errors.empty());
  CHECK(q.previous_assistant_digest.empty());
}

TEST_CASE("build_query carries recent tool errors through") {
  TaskContext ctx{"t-1", "handle the desk queue", {}, "retry the call"};
  Trace trace;
  trace.steps.push_back({"desk_check()", "queue ok", false, 0});
  trace.steps.push_back({"noop()", "error: tool rejected the arguments", true, 0});
  RunConfig config;
  auto q = build_query(ctx, 2, trace, config);
  REQUIRE(q.recent_tool_errors.size() == 1);
  CHECK(q.recent_tool_errors[0] == "error: tool rejected the arguments");
  CHECK(q.previous_assistant_digest == "noop()");
}

TEST_CASE("build_query is deterministic") {
  TaskContext ctx{"t-1", "instruction", {"a_tool"}, "do the thing with a_tool"};
  Trace trace;
  trace.steps.push_back({"a_tool(x=1)", "ok", false, 0});
  RunConfig config;
  auto q1 = build_query(ctx, 1, trace, config);
  auto q2 = build_query(ctx, 1, trace, config);
  CHECK(render_query(q1) == render_query(q2));
  CHECK(q1.tool_mentions == q2.tool_mentions);
  REQUIRE(q1.tool_mentions.size() == 1);
  CHECK(q1.tool_mentions[0] == "a_tool");
}

TEST_CASE("combine: weighted mixture honours the convexity endpoints") {
  CHECK(combine({1, 1, 1, 1, 0}, kWeights) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(combine({0, 0, 0, 0, 0}, kWeights) == doctest::Approx(0.0).epsilon(1e-12));
  // components (1,0,0,0) with the default lambdas
  CHECK(combine({1, 0, 0, 0, 0}, kWeights) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("score rejects invalid weights") {
  auto q = make_query("anything");
  auto v = make_view("sk-1");
  CHECK_THROWS_AS(score(q, v, ScoreWeights{0.5, 0.5, 0.5, 0.5}, default_embedder()),
                  InvalidWeights);
  CHECK_THROWS_AS(score(q, v, ScoreWeights{-0.1, 0.6, 0.3, 0.2}, default_embedder()),
                  InvalidWeights);
}

TEST_CASE("component scorers match their definitions") {
  auto v = make_view("sk-1");
  v.name = "alpha beta gamma delta";
  v.description = "";
  v.trigger_conditions = {};
  // query "alpha beta gamma epsilon": grams {abg, bge'} vs {abg, bgd}
  auto q = make_query("alpha beta gamma epsilon");
  const double expected = 1.0 / 3.0;  // one shared gram of three distinct
  CHECK(sparse_overlap(q, v) == doctest::Approx(expected).epsilon(1e-12));

  // identical text embeds identically
  RetrievalQuery qe;
  qe.request_text = "one two three four";
  SkillRetrievalView ve = make_view("sk-2");
  const double self = cosine(default_embedder().embed("one two three four"),
                             default_embedder().embed("one two three four"));
  CHECK(self == doctest::Approx(1.0).epsilon(1e-9));

  // tool compatibility
  SkillRetrievalView tools = make_view("sk-3");
  tools.allowed_tools = {"a_tool", "b_tool"};
  RetrievalQuery qt;
  qt.tool_mentions = {"a_tool", "c_tool"};
  CHECK(tool_compatibility(qt, tools) == doctest::Approx(0.5).epsilon(1e-12));
  SkillRetrievalView no_tools = make_view("sk-4");
  no_tools.allowed_tools.clear();
  CHECK(tool_compatibility(qt, no_tools) == doctest::Approx(0.5).epsilon(1e-12));

  // trust: Laplace-smoothed ratio, halved for trial
  TrustInputs t;
  t.helpful = 3;
  t.harmful = 1;
  t.state = Stage::active;
  CHECK(trust_score(t) == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  t.state = Stage::trial;
  CHECK(trust_score(t) == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("select_top_k: a store of disabled skills yields nothing") {
  std::vector<SkillRetrievalView> snapshot{make_view("sk-1", Stage::disabled),
                                           make_view("sk-2", Stage::disabled)};
  auto out = select_top_k(make_query("anything"), snapshot, 5, RetrievalMode::training,
                          kWeights, default_embedder());
  CHECK(out.empty());
}

TEST_CASE("select_top_k: K = 0 yields nothing") {
  std::vector<SkillRetrievalView> snapshot{make_view("sk-1")};
  auto out = select_top_k(make_query("anything"), snapshot, 0, RetrievalMode::training,
                          kWeights, default_embedder());
  CHECK(out.empty());
}

TEST_CASE("select_top_k matches the full-sort oracle on a known store") {
  std::vector<SkillRetrievalView> snapshot;
  for (int i = 0; i < 5; ++i) {
    auto v = make_view("sk-" + std::to_string(i));
    v.trust.helpful = i;
    snapshot.push_back(std::move(v));
  }
  auto q = make_query("use sk-2 for this request");
  auto got = selected_ids(select_top_k(q, snapshot, 3, RetrievalMode::training, kWeights,
                                       default_embedder()));
  auto want = brute_force_top_k(q, snapshot, 3, RetrievalMode::training);
  CHECK(got == want);
}

TEST_CASE("held-out mode exposes active skills only; training ranks trial lower") {
  std::vector<SkillRetrievalView> snapshot;
  auto trial = make_view("sk-trial", Stage::trial);
  trial.trust.helpful = 100;  // huge trust cannot outrank active skills
  snapshot.push_back(trial);
  snapshot.push_back(make_view("sk-active", Stage::active));
  snapshot.push_back(make_view("sk-archived", Stage::archived));

  auto q = make_query("anything at all");
  auto training = selected_ids(select_top_k(q, snapshot, 5, RetrievalMode::training, kWeights,
                                            default_embedder()));
  REQUIRE(training.size() == 2);
  CHECK(training[0] == "sk-active");
  CHECK(training[1] == "sk-trial");

  auto heldout = selected_ids(select_top_k(q, snapshot, 5, RetrievalMode::heldout, kWeights,
                                           default_embedder()));
  REQUIRE(heldout.size() == 1);
  CHECK(heldout[0] == "sk-active");
}

TEST_CASE("property: selection equals the oracle and never leaks unexposable skills") {
  TestRng rng(7);
  const char* word_pool[] = {"order", "vault", "brake", "queue", "code",
                             "token", "open",  "close", "check", "submit"};
  auto random_text = [&](int words) {
    std::string out;
    for (int i = 0; i < words; ++i) {
      if (i) out += " ";
      out += word_pool[rng.below(10)];
    }
    return out;
  };
  for (int round = 0; round < 60; ++round) {
    std::vector<SkillRetrievalView> snapshot;
    const int n = 1 + rng.below(50);
    for (int i = 0; i < n; ++i) {
      auto v = make_view("sk-" + std::to_string(i), kAllStages[rng.below(4)]);
      v.name = random_text(3);
      v.description = random_text(6);
      v.trigger_conditions = {random_text(4)};
      v.trust.helpful = rng.below(5);
      v.trust.harmful = rng.below(5);
      snapshot.push_back(std::move(v));
    }
    auto q = make_query(random_text(8));
    const int k = rng.below(12);
    for (auto mode : {RetrievalMode::training, RetrievalMode::heldout}) {
      auto ranked = select_top_k(q, snapshot, k, mode, kWeights, default_embedder());
      CHECK(selected_ids(ranked) == brute_force_top_k(q, snapshot, k, mode));
      for (const auto& r : ranked) {
        CHECK(r.view.trust.state != Stage::disabled);
        CHECK(r.view.trust.state != Stage::archived);
        if (mode == RetrievalMode::heldout) CHECK(r.view.trust.state == Stage::active);
      }
    }
  }
}

TEST_CASE("property: raising one component never lowers a skill's rank") {
  TestRng rng(11);
  for (int round = 0; round < 40; ++round) {
    std::vector<SkillRetrievalView> snapshot;
    for (int i = 0; i < 8; ++i) {
      auto v = make_view("sk-" + std::to_string(i));
      v.trust.helpful = rng.below(4);
      v.trust.harmful = rng.below(4);
      snapshot.push_back(std::move(v));
    }
    auto q = make_query("use sk-3 now");
    auto before = selected_ids(select_top_k(q, snapshot, 8, RetrievalMode::training, kWeights,
                                            default_embedder()));
    const auto target = "sk-" + std::to_string(rng.below(8));
    for (auto& v : snapshot) {
      if (v.id == target) v.trust.helpful += 3;  // trust component strictly rises
    }
    auto after = selected_ids(select_top_k(q, snapshot, 8, RetrievalMode::training, kWeights,
                                           default_embedder()));
    const auto rank = [&](const std::vector<std::string>& ids) {
      return std::find(ids.begin(), ids.end(), target) - ids.begin();
    };
    CHECK(rank(after) <= rank(before));
  }
}

TEST_CASE("rendered skill blocks carry name, trigger, tools and body verbatim") {
  auto v = make_view("sk-9");
  v.allowed_tools = {"vault_open"};
  auto block = render_skill_block(v);
  CHECK(block.find("[[skill sk-9@v1 name=\"skill sk-9\"]]") != std::string::npos);
  CHECK(block.find("trigger: use sk-9") != std::string::npos);
  CHECK(block.find("tools: vault_open") != std::string::npos);
  CHECK(block.find("body of sk-9") != std::string::npos);
  CHECK(block.find("[[/skill]]") != std::string::npos);
}
