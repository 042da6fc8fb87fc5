#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "skevo/oracle.hpp"
#include "skevo/parsing.hpp"

using namespace skevo;

namespace {

// Captures request bodies and replays scripted replies, in the mold of a
// mock HTTP client.
class MockTransport final : public HttpTransport {
 public:
  std::vector<std::string> bodies;
  std::vector<std::pair<bool, HttpReply>> replies;  // {throws, reply}
  std::size_t cursor = 0;

  HttpReply post_json(const std::string& url, const std::string& api_key,
                      const std::string& body) override {
    (void)url;
    (void)api_key;
    bodies.push_back(body);
    if (cursor >= replies.size()) throw TransportFailure("transport_failure: no reply");
    auto [throws, reply] = replies[cursor++];
    if (throws) throw TransportFailure("transport_failure: connection reset");
    return reply;
  }
};

std::string completion_body(const std::string& content) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array();
  j["choices"].push_back({{"message", {{"role", "assistant"}, {"content", content}}}});
  return j.dump();
}

}  // namespace

TEST_CASE("scripted tape replays responses in order and then exhausts") {
  ScriptedBackend backend(true);
  backend.push_tape(RoleTag::executor, "A");
  auto request = ChatRequest::for_role(RoleTag::executor, "anything");
  CHECK(backend.chat(request) == "A");
  CHECK_THROWS_AS(backend.chat(request), TapeExhausted);
}

TEST_CASE("scripted rules match required substrings in order, then the default") {
  ScriptedBackend backend;
  backend.add_rule({RoleTag::executor, {"[turn 1]", "AC-1"}, "call: open(code=AC-1)"});
  backend.add_rule({RoleTag::executor, {"[turn 1]"}, "noop()"});
  backend.set_default_response(RoleTag::executor, "fallback");

  CHECK(backend.chat(ChatRequest::for_role(RoleTag::executor,
                                           "[turn 1] the code is AC-1")) ==
        "call: open(code=AC-1)");
  CHECK(backend.chat(ChatRequest::for_role(RoleTag::executor, "[turn 1] no code here")) ==
        "noop()");
  CHECK(backend.chat(ChatRequest::for_role(RoleTag::executor, "[turn 2]")) == "fallback");
}

TEST_CASE("executor and verdict requests pin temperature to zero") {
  CHECK(ChatRequest::for_role(RoleTag::executor, "x").decode.temperature == 0.0);
  CHECK(ChatRequest::for_role(RoleTag::bundle_verdict, "x").decode.temperature == 0.0);
  CHECK(ChatRequest::for_role(RoleTag::extractor, "x").decode.temperature > 0.0);
}

TEST_CASE("remote backend retries transient transport failures within budget") {
  auto transport = std::make_unique<MockTransport>();
  auto* mock = transport.get();
  mock->replies = {{true, {}}, {true, {}}, {false, {200, completion_body("ok")}}};
  RemoteConfig config;
  config.endpoint_url = "http://example.test/v1/chat/completions";
  config.model = "test-model";
  config.retry_budget = 2;
  RemoteBackend backend(config, std::move(transport));
  CHECK(backend.chat(ChatRequest::for_role(RoleTag::executor, "hello")) == "ok");
  CHECK(mock->bodies.size() == 3);
}

TEST_CASE("remote backend fails after the retry budget is exhausted") {
  auto transport = std::make_unique<MockTransport>();
  transport->replies = {{true, {}}, {true, {}}, {true, {}}};
  RemoteConfig config;
  config.endpoint_url = "http://example.test/v1/chat/completions";
  config.retry_budget = 2;
  RemoteBackend backend(config, std::move(transport));
  CHECK_THROWS_AS(backend.chat(ChatRequest::for_role(RoleTag::executor, "hello")),
                  TransportFailure);
}

TEST_CASE("remote backend serializes the chat-completions wire shape") {
  auto transport = std::make_unique<MockTransport>();
  auto* mock = transport.get();
  mock->replies = {{false, {200, completion_body("done")}}};
  RemoteConfig config;
  config.endpoint_url = "http://example.test/v1/chat/completions";
  config.model = "test-model";
  RemoteBackend backend(config, std::move(transport));

  ChatRequest request = ChatRequest::for_role(RoleTag::credit, "judge this");
  request.decode.max_output_tokens = 77;
  backend.chat(request);

  auto payload = nlohmann::json::parse(mock->bodies.at(0));
  CHECK(payload.at("model") == "test-model");
  CHECK(payload.at("max_tokens") == 77);
  CHECK(payload.at("messages").at(0).at("role") == "user");
  CHECK(payload.at("messages").at(0).at("content") == "judge this");
  CHECK(payload.contains("temperature"));
}

TEST_CASE("chat client logs every call with its prompt and response") {
  ScriptedBackend backend;
  backend.set_default_response(RoleTag::executor, "reply");
  CallLog log;
  ChatClient client(backend, log);
  client.set_context("task-7", 2);
  client.chat(ChatRequest::for_role(RoleTag::executor, "prompt text"));
  REQUIRE(log.records().size() == 1);
  CHECK(log.records()[0].task_id == "task-7");
  CHECK(log.records()[0].window == 2);
  CHECK(log.records()[0].prompt.find("prompt text") != std::string::npos);
  CHECK(log.records()[0].response == "reply");
  CHECK_FALSE(log.records()[0].failed);
}

TEST_CASE("call log merge renumbers while preserving sub-order") {
  CallLog a, b;
  a.append({0, RoleTag::executor, "t1", 0, "p1", "r1", false});
  b.append({0, RoleTag::credit, "t2", 0, "p2", "r2", false});
  b.append({0, RoleTag::credit, "t2", 0, "p3", "r3", false});
  a.merge(b);
  REQUIRE(a.records().size() == 3);
  CHECK(a.records()[0].ordinal == 0);
  CHECK(a.records()[1].ordinal == 1);
  CHECK(a.records()[2].ordinal == 2);
  CHECK(a.records()[1].prompt == "p2");
  CHECK(a.records()[2].prompt == "p3");
}

TEST_CASE("embedding is deterministic and unit-norm for non-empty text") {
  const auto& embedder = default_embedder();
  auto a = embedder.embed("press the brake pedal before starting");
  auto b = embedder.embed("press the brake pedal before starting");
  CHECK(a == b);
  CHECK(static_cast<int>(a.size()) == kEmbeddingDim);
  double norm = 0.0;
  for (float x : a) norm += static_cast<double>(x) * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cosine(a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("empty text embeds to the zero vector with cosine zero") {
  const auto& embedder = default_embedder();
  auto zero = embedder.embed("");
  for (float x : zero) CHECK(x == 0.0f);
  CHECK(cosine(zero, embedder.embed("anything else here")) == 0.0);
  CHECK(cosine(zero, zero) == 0.0);
}

TEST_CASE("tool-call parsing handles prefixes, quotes, and canonical rendering") {
  auto call = parse_tool_call("call: place_order(symbol='AAPL', amount=100)");
  REQUIRE(call.has_value());
  CHECK(call->name == "place_order");
  REQUIRE(call->args.size() == 2);
  CHECK(render_call(*call) == "place_order(amount=100, symbol=AAPL)");

  CHECK_FALSE(parse_tool_call("no call at all").has_value());
  auto noop = parse_tool_call("noop()");
  REQUIRE(noop.has_value());
  CHECK(noop->name == "noop");
}

TEST_CASE("skill block parsing round-trips bundles and skips malformed blocks") {
  const std::string response =
      "Some preamble.\n"
      "SKILL\nname: alpha\nsemantics: callable_function\ndescription: d\n"
      "triggers: a | b\ntools: t1, t2\ndomains: dom\nbody:\nline one\nline two\nEND SKILL\n"
      "BUNDLE\ncase: unit | input: call it | expect: works | rule: judge\n"
      "case: negative | input: abuse it | expect: refuses | rule: judge\nEND BUNDLE\n"
      "SKILL\nname: missing-body\nsemantics: workflow\nEND SKILL\n";
  auto parsed = parse_skill_blocks(response);
  REQUIRE(parsed.size() == 1);
  CHECK(parsed[0].skill.name == "alpha");
  CHECK(parsed[0].skill.semantics == Semantics::callable_function);
  CHECK(parsed[0].skill.triggers.size() == 2);
  CHECK(parsed[0].skill.tools.count("t2") == 1);
  CHECK(parsed[0].skill.body == "line one\nline two");
  REQUIRE(parsed[0].bundle_cases.size() == 2);
  CHECK(parsed[0].bundle_cases[1].kind == CaseKind::negative);
  CHECK(parse_skill_blocks("NO SKILL").empty());
}

TEST_CASE("verdict parsing is prefix-based and conservative") {
  CHECK(parse_verdict("PASS").verdict == Verdict::pass);
  CHECK(parse_verdict("pass, looks right").verdict == Verdict::pass);
  auto fail = parse_verdict("FAIL: regression on the negative case");
  CHECK(fail.verdict == Verdict::fail);
  CHECK(fail.detail == "regression on the negative case");
  CHECK(parse_verdict("maybe?").verdict == Verdict::unparseable);
}
