#include "skevo/oracle.hpp"

#include <cmath>
#include <cstdlib>

#include "json.hpp"
#include "skevo/text.hpp"

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include "httplib.h"

namespace skevo {

std::string to_string(RoleTag tag) {
  switch (tag) {
    case RoleTag::executor: return "executor";
    case RoleTag::extractor: return "extractor";
    case RoleTag::refactorer: return "refactorer";
    case RoleTag::refiner: return "refiner";
    case RoleTag::credit: return "credit";
    case RoleTag::bundle_verdict: return "bundle_verdict";
    case RoleTag::meta: return "meta";
  }
  return "executor";
}

std::optional<RoleTag> parse_role_tag(const std::string& s) {
  for (RoleTag tag : kAllRoleTags) {
    if (to_string(tag) == s) return tag;
  }
  return std::nullopt;
}

ChatRequest ChatRequest::for_role(RoleTag tag, std::string prompt) {
  ChatRequest req;
  req.role_tag = tag;
  req.messages.push_back({"user", std::move(prompt)});
  switch (tag) {
    case RoleTag::executor:
    case RoleTag::bundle_verdict:
      req.decode.temperature = 0.0;  // deterministic decoding for execution and verdicts
      break;
    case RoleTag::extractor:
      req.decode.temperature = 0.7;
      break;
    default:
      req.decode.temperature = 0.2;
      break;
  }
  return req;
}

std::string flatten(const ChatRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    out += m.speaker;
    out += ": ";
    out += m.text;
    out += "\n";
  }
  return out;
}

void ScriptedBackend::push_tape(RoleTag role, std::string response) {
  std::lock_guard<std::mutex> lock(mutex_);
  tapes_[role].push_back(std::move(response));
}

void ScriptedBackend::add_rule(ScriptedRule rule) {
  std::lock_guard<std::mutex> lock(mutex_);
  rules_.push_back(std::move(rule));
}

void ScriptedBackend::set_default_response(RoleTag role, std::string response) {
  std::lock_guard<std::mutex> lock(mutex_);
  defaults_[role] = std::move(response);
}

std::string ScriptedBackend::chat(const ChatRequest& request) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto tape = tapes_.find(request.role_tag);
  if (tape != tapes_.end()) {
    std::size_t& cursor = cursors_[request.role_tag];
    if (cursor < tape->second.size()) {
      return tape->second[cursor++];
    }
    if (strict_) {
      throw TapeExhausted("tape_exhausted: " + to_string(request.role_tag));
    }
  }
  const std::string prompt = flatten(request);
  for (const auto& rule : rules_) {
    if (rule.role_tag != request.role_tag) continue;
    bool all = true;
    for (const auto& needle : rule.required_substrings) {
      if (!text::contains(prompt, needle)) {
        all = false;
        break;
      }
    }
    if (all) return rule.response;
  }
  auto dflt = defaults_.find(request.role_tag);
  if (dflt != defaults_.end()) return dflt->second;
  if (strict_) throw TapeExhausted("tape_exhausted: " + to_string(request.role_tag));
  return "";
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttpReply post_json(const std::string& url, const std::string& api_key,
                      const std::string& body) override {
    auto split = split_url(url);
    httplib::Client client(split.first);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + api_key);
    }
    auto res = client.Post(split.second, headers, body, "application/json");
    if (!res) {
      throw TransportFailure("transport_failure: " + httplib::to_string(res.error()));
    }
    return HttpReply{res->status, res->body};
  }

 private:
  static std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
  }
};

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport() {
  return std::make_unique<HttplibTransport>();
}

RemoteConfig RemoteConfig::from_env() {
  RemoteConfig cfg;
  if (const char* v = std::getenv("SKEVO_ENDPOINT")) cfg.endpoint_url = v;
  if (const char* v = std::getenv("SKEVO_API_KEY")) cfg.api_key = v;
  if (const char* v = std::getenv("SKEVO_MODEL")) cfg.model = v;
  return cfg;
}

RemoteBackend::RemoteBackend(RemoteConfig config, std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::string RemoteBackend::chat(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["temperature"] = request.decode.temperature;
  body["max_tokens"] = request.decode.max_output_tokens;
  auto messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.speaker}, {"content", m.text}});
  }
  body["messages"] = messages;
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry_budget; ++attempt) {
    try {
      HttpReply reply = transport_->post_json(config_.endpoint_url, config_.api_key, payload);
      if (reply.status < 200 || reply.status >= 300) {
        last_error = "status " + std::to_string(reply.status);
        continue;
      }
      auto parsed = nlohmann::json::parse(reply.body, nullptr, false);
      if (parsed.is_discarded()) {
        last_error = "unparseable response body";
        continue;
      }
      return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const TransportFailure& e) {
      last_error = e.what();
    } catch (const nlohmann::json::exception& e) {
      last_error = e.what();
    }
  }
  throw TransportFailure("transport_failure after retries: " + last_error);
}

void CallLog::append(CallRecord record) {
  record.ordinal = static_cast<long>(records_.size());
  records_.push_back(std::move(record));
}

void CallLog::merge(const CallLog& other) {
  for (CallRecord record : other.records_) {
    append(std::move(record));
  }
}

long CallLog::count(RoleTag tag) const {
  long n = 0;
  for (const auto& r : records_) {
    if (r.role_tag == tag) ++n;
  }
  return n;
}

std::string ChatClient::chat(const ChatRequest& request) {
  CallRecord record;
  record.role_tag = request.role_tag;
  record.task_id = task_id_;
  record.window = window_;
  record.prompt = flatten(request);
  try {
    record.response = backend_->chat(request);
  } catch (const OracleError& e) {
    record.response = e.what();
    record.failed = true;
    log_->append(std::move(record));
    throw;
  }
  log_->append(record);
  return record.response;
}

std::vector<float> HashingEmbedder::embed(std::string_view input) const {
  std::vector<float> v(kEmbeddingDim, 0.0f);
  auto grams = text::word_trigrams(input);
  if (grams.empty()) return v;
  for (const auto& gram : grams) {
    const std::uint64_t h = text::fnv1a64(gram);
    const std::size_t index = static_cast<std::size_t>(h % kEmbeddingDim);
    const float sign = ((h >> 8) & 1ULL) ? 1.0f : -1.0f;
    v[index] += sign;
  }
  double norm = 0.0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (float& x : v) x = static_cast<float>(x / norm);
  }
  return v;
}

const Embedder& default_embedder() {
  static HashingEmbedder instance;
  return instance;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace skevo
