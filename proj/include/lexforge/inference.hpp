#pragma once

// Chat-completion client: request/response types, an HTTP transport speaking
// the /v1/chat/completions wire format, an in-process mock transport, and the
// retrying client with bounded-parallel batch execution.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lexforge/error.hpp"

namespace lexforge {

enum class Role { kSystem, kUser, kAssistant };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "";
}

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
};

struct ChatRequest {
  std::string model = "default";
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  bool logprobs_requested = false;
  // Sampling seed forwarded to the endpoint; distinguishes repeated draws.
  std::optional<std::uint64_t> seed;
};

inline void validate(const ChatRequest& req) {
  if (req.messages.empty()) throw InvalidArgument("chat request has no messages");
  if (req.messages.back().role != Role::kUser) throw InvalidArgument("last message must have role user");
  if (!(req.temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (req.max_tokens <= 0) throw InvalidArgument("max_tokens must be positive");
}

inline ChatRequest user_request(std::string prompt, std::optional<std::string> system = std::nullopt) {
  ChatRequest req;
  if (system) req.messages.push_back({Role::kSystem, std::move(*system)});
  req.messages.push_back({Role::kUser, std::move(prompt)});
  return req;
}

inline nlohmann::ordered_json request_body(const ChatRequest& req) {
  nlohmann::ordered_json body;
  body["model"] = req.model;
  body["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : req.messages) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens;
  body["logprobs"] = req.logprobs_requested;
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

inline ChatRequest request_from_body(const nlohmann::json& body) {
  ChatRequest req;
  req.model = body.value("model", req.model);
  for (const auto& m : body.at("messages")) {
    const auto role = m.at("role").get<std::string>();
    Role r = role == "system" ? Role::kSystem : role == "assistant" ? Role::kAssistant : Role::kUser;
    req.messages.push_back({r, m.at("content").get<std::string>()});
  }
  req.temperature = body.value("temperature", req.temperature);
  req.max_tokens = body.value("max_tokens", req.max_tokens);
  req.logprobs_requested = body.value("logprobs", false);
  if (auto it = body.find("seed"); it != body.end() && it->is_number_unsigned()) req.seed = it->get<std::uint64_t>();
  return req;
}

struct ChatResponse {
  std::string content;
  // Sum of token log-probabilities when the endpoint returned them.
  std::optional<double> logprob;
};

// Reads choices[0].message.content and, if present, sums
// choices[0].logprobs.content[*].logprob.
inline ChatResponse parse_response_body(const nlohmann::json& body) {
  const auto& choices = body.at("choices");
  if (!choices.is_array() || choices.empty()) throw EndpointError(200, "response has no choices");
  const auto& first = choices.front();
  ChatResponse resp;
  resp.content = first.at("message").at("content").get<std::string>();
  if (auto it = first.find("logprobs"); it != first.end() && it->is_object()) {
    if (auto c = it->find("content"); c != it->end() && c->is_array()) {
      double sum = 0.0;
      for (const auto& tok : *c) sum += tok.at("logprob").get<double>();
      resp.logprob = sum;
    }
  }
  return resp;
}

inline nlohmann::ordered_json response_body(const ChatResponse& resp) {
  nlohmann::ordered_json choice;
  choice["index"] = 0;
  choice["message"] = {{"role", "assistant"}, {"content", resp.content}};
  if (resp.logprob) {
    choice["logprobs"] = {{"content", nlohmann::ordered_json::array({{{"token", resp.content}, {"logprob", *resp.logprob}}})}};
  }
  choice["finish_reason"] = "stop";
  nlohmann::ordered_json body;
  body["object"] = "chat.completion";
  body["choices"] = nlohmann::ordered_json::array({choice});
  return body;
}

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
};

struct EndpointConfig {
  std::string base_url;
  // Name of the environment variable holding the API key. Keys are never
  // read from config files.
  std::string api_key_env = "POLILEGAL_API_KEY";
  std::string model = "default";
  int max_in_flight = 4;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{60000};
};

inline void validate(const EndpointConfig& cfg) {
  if (cfg.max_in_flight < 1) throw InvalidArgument("max_in_flight must be >= 1");
  if (cfg.retry.max_attempts < 1) throw InvalidArgument("retry.max_attempts must be >= 1");
  if (cfg.retry.multiplier < 1.0) throw InvalidArgument("retry.multiplier must be >= 1");
}

// One synchronous call against an endpoint. Implementations throw
// EndpointError or TimeoutError and must be callable concurrently.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatResponse send(const ChatRequest& req) = 0;
};

using LogSink = std::function<void(const std::string&)>;

inline std::string redact_authorization(const std::string& value) {
  if (value.empty()) return value;
  const auto space = value.find(' ');
  return (space == std::string::npos ? std::string() : value.substr(0, space + 1)) + "[REDACTED]";
}

class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(EndpointConfig cfg, LogSink log = {}) : cfg_(std::move(cfg)), log_(std::move(log)) {
    split_url(cfg_.base_url, host_, path_prefix_);
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      authorization_ = std::string("Bearer ") + key;
    }
  }

  ChatResponse send(const ChatRequest& req) override {
    httplib::Client client(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!authorization_.empty()) headers.emplace("Authorization", authorization_);
    const std::string path = path_prefix_ + "/v1/chat/completions";
    const std::string body = request_body(req).dump();
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      log(path, body, 0, httplib::to_string(err));
      if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
        throw TimeoutError(httplib::to_string(err));
      }
      throw EndpointError(0, httplib::to_string(err));
    }
    log(path, body, res->status, res->body);
    if (res->status < 200 || res->status >= 300) throw EndpointError(res->status, res->body);
    try {
      return parse_response_body(nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::exception& e) {
      throw EndpointError(res->status, std::string("malformed response: ") + e.what());
    }
  }

 private:
  static void split_url(const std::string& url, std::string& host, std::string& prefix) {
    const auto scheme = url.find("://");
    const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host = path_start == std::string::npos ? url : url.substr(0, path_start);
    prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  }

  void log(const std::string& path, const std::string& request, int status, const std::string& response) const {
    if (!log_) return;
    nlohmann::ordered_json rec;
    rec["url"] = host_ + path;
    rec["authorization"] = redact_authorization(authorization_);
    rec["request"] = request;
    rec["status"] = status;
    rec["response"] = response;
    log_(rec.dump());
  }

  EndpointConfig cfg_;
  LogSink log_;
  std::string host_;
  std::string path_prefix_;
  std::string authorization_;
};

// In-process transport driven by a handler. Tracks concurrency so tests can
// assert the in-flight bound.
class MockTransport : public ChatTransport {
 public:
  using Handler = std::function<ChatResponse(const ChatRequest&, std::size_t call_index)>;

  explicit MockTransport(Handler handler, std::chrono::microseconds delay = {})
      : handler_(std::move(handler)), delay_(delay) {}

  static std::shared_ptr<MockTransport> constant(std::string content) {
    return std::make_shared<MockTransport>(
        [content = std::move(content)](const ChatRequest&, std::size_t) { return ChatResponse{content, {}}; });
  }

  ChatResponse send(const ChatRequest& req) override {
    const std::size_t index = calls_.fetch_add(1);
    const int now = in_flight_.fetch_add(1) + 1;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { n.fetch_sub(1); }
    } leave{in_flight_};
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    return handler_(req, index);
  }

  std::size_t calls() const { return calls_.load(); }
  int max_in_flight_observed() const { return max_in_flight_.load(); }

 private:
  Handler handler_;
  std::chrono::microseconds delay_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

struct CompletionResult {
  std::optional<ChatResponse> response;
  std::string error;
  int status = 0;

  bool ok() const { return response.has_value(); }
};

class InferenceClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  InferenceClient(std::shared_ptr<ChatTransport> transport, EndpointConfig cfg,
                  Sleeper sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : transport_(std::move(transport)), cfg_(std::move(cfg)), sleep_(std::move(sleep)) {
    validate(cfg_);
  }

  const EndpointConfig& config() const { return cfg_; }

  // Retries transient failures (no response, 429, 5xx) with exponential
  // backoff. Other statuses fail immediately.
  ChatResponse complete(const ChatRequest& req) const {
    validate(req);
    auto backoff = cfg_.retry.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      try {
        return transport_->send(req);
      } catch (const EndpointError& e) {
        if (!e.transient() || attempt >= cfg_.retry.max_attempts) throw;
      }
      sleep_(backoff);
      backoff = std::min(cfg_.retry.max_backoff,
                         std::chrono::milliseconds(static_cast<long long>(backoff.count() * cfg_.retry.multiplier)));
    }
  }

  // Results are in request order. At most max_in_flight calls run at once and
  // a failing request never aborts the batch.
  std::vector<CompletionResult> batch_complete(std::span<const ChatRequest> reqs) const {
    std::vector<CompletionResult> results(reqs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < reqs.size(); i = next.fetch_add(1)) {
        try {
          results[i].response = complete(reqs[i]);
        } catch (const EndpointError& e) {
          results[i].error = e.what();
          results[i].status = e.status();
        } catch (const std::exception& e) {
          results[i].error = e.what();
        }
      }
    };
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_in_flight), reqs.size());
    if (n_workers <= 1) {
      worker();
      return results;
    }
    std::vector<std::jthread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    threads.clear();
    return results;
  }

 private:
  std::shared_ptr<ChatTransport> transport_;
  EndpointConfig cfg_;
  Sleeper sleep_;
};

}  // namespace lexforge
