#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skevo {

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TransportFailure : OracleError {
  using OracleError::OracleError;
};
struct TapeExhausted : OracleError {
  using OracleError::OracleError;
};

enum class RoleTag { executor, extractor, refactorer, refiner, credit, bundle_verdict, meta };

std::string to_string(RoleTag tag);
std::optional<RoleTag> parse_role_tag(const std::string& s);

inline constexpr RoleTag kAllRoleTags[] = {
    RoleTag::executor,       RoleTag::extractor, RoleTag::refactorer, RoleTag::refiner,
    RoleTag::bundle_verdict, RoleTag::credit,    RoleTag::meta};

struct ChatMessage {
  std::string speaker;  // "system" | "user" | "assistant"
  std::string text;
};

struct DecodeParams {
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

struct ChatRequest {
  RoleTag role_tag = RoleTag::executor;
  std::vector<ChatMessage> messages;
  DecodeParams decode;

  // Applies the per-role decoding policy; executor and bundle_verdict calls
  // always use temperature 0.
  static ChatRequest for_role(RoleTag tag, std::string prompt);
};

// Canonical single-string rendering of a request, used for call logging and
// scripted pattern matching.
std::string flatten(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
};

// One scripted response, selected when every required substring appears in
// the flattened request. Rules are matched in insertion order.
struct ScriptedRule {
  RoleTag role_tag = RoleTag::executor;
  std::vector<std::string> required_substrings;
  std::string response;
};

// Deterministic test/offline backend: per-role response tapes consumed by
// ordinal, then pattern rules, then a per-role default. Strict mode throws
// TapeExhausted instead of falling back to the default.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(bool strict = false) : strict_(strict) {}

  void push_tape(RoleTag role, std::string response);
  void add_rule(ScriptedRule rule);
  void set_default_response(RoleTag role, std::string response);

  std::string chat(const ChatRequest& request) override;

 private:
  bool strict_;
  std::map<RoleTag, std::vector<std::string>> tapes_;
  std::map<RoleTag, std::size_t> cursors_;
  std::vector<ScriptedRule> rules_;
  std::map<RoleTag, std::string> defaults_;
  std::mutex mutex_;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpReply post_json(const std::string& url, const std::string& api_key,
                              const std::string& body) = 0;
};

std::unique_ptr<HttpTransport> make_httplib_transport();

struct RemoteConfig {
  std::string endpoint_url;  // e.g. https://host/v1/chat/completions
  std::string api_key;
  std::string model;
  int retry_budget = 2;

  // Reads SKEVO_ENDPOINT, SKEVO_API_KEY, SKEVO_MODEL.
  static RemoteConfig from_env();
};

// Chat-completions wire client: messages array in, first choice's message
// content out. Transport errors are retried up to retry_budget times.
class RemoteBackend final : public ChatBackend {
 public:
  explicit RemoteBackend(RemoteConfig config,
                         std::unique_ptr<HttpTransport> transport = make_httplib_transport());

  std::string chat(const ChatRequest& request) override;

 private:
  RemoteConfig config_;
  std::unique_ptr<HttpTransport> transport_;
};

struct CallRecord {
  long ordinal = 0;
  RoleTag role_tag = RoleTag::executor;
  std::string task_id;
  int window = -1;
  std::string prompt;
  std::string response;
  bool failed = false;
};

// Append-only call log. Parallel task executions write into task-local logs
// that the single writer merges at the barrier, preserving per-task order.
class CallLog {
 public:
  void append(CallRecord record);
  void merge(const CallLog& other);
  const std::vector<CallRecord>& records() const { return records_; }
  long count(RoleTag tag) const;

 private:
  std::vector<CallRecord> records_;
};

// Logging wrapper every role call site goes through.
class ChatClient {
 public:
  ChatClient(ChatBackend& backend, CallLog& log) : backend_(&backend), log_(&log) {}

  void set_context(std::string task_id, int window) {
    task_id_ = std::move(task_id);
    window_ = window;
  }

  std::string chat(const ChatRequest& request);

 private:
  ChatBackend* backend_;
  CallLog* log_;
  std::string task_id_;
  int window_ = -1;
};

inline constexpr int kEmbeddingDim = 256;

class Embedder {
 public:
  virtual ~Embedder() = default;
  // Unit-norm vector of dimension kEmbeddingDim; empty text maps to the zero
  // vector (cosine against anything is then 0).
  virtual std::vector<float> embed(std::string_view text) const = 0;
};

// Default offline provider: signed feature hashing of word 3-grams,
// L2-normalized. Fully deterministic.
class HashingEmbedder final : public Embedder {
 public:
  std::vector<float> embed(std::string_view text) const override;
};

const Embedder& default_embedder();

double cosine(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace skevo
