#pragma once

// Completion backends: a live client for OpenAI-compatible
// /chat/completions endpoints and a scripted backend that replays fixed
// responses for offline runs.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

namespace agentsbench {

enum class Role { kSystem, kUser, kAssistant };

inline std::string_view role_name(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  double top_p = 1.0;
  std::optional<int> max_tokens;

  void validate() const {
    if (messages.empty()) throw std::invalid_argument("completion request has no messages");
    for (const auto& m : messages) {
      if (m.role != Role::kAssistant && m.content.empty()) {
        throw std::invalid_argument("empty " + std::string(role_name(m.role)) + " message");
      }
    }
    if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    if (!(top_p > 0 && top_p <= 1)) throw std::invalid_argument("top_p must be in (0, 1]");
    if (max_tokens && *max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
  }
};

inline nlohmann::json request_body(const CompletionRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  nlohmann::json body = {{"model", req.model}, {"messages", std::move(msgs)}, {"temperature", req.temperature},
                         {"top_p", req.top_p}};
  if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
  return body;
}

class BackendError : public std::runtime_error {
 public:
  enum class Kind { kConfig, kAuth, kHttp, kRetriesExhausted, kMalformed, kEmpty, kScriptExhausted };

  BackendError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// Returns script entries in order and records every request it receives.
// Calls are serialized so concurrent callers still see replay order.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> script) : script_(std::move(script)) {}

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    std::lock_guard lock(mu_);
    log_.push_back(request);
    if (next_ >= script_.size()) throw BackendError(BackendError::Kind::kScriptExhausted, "script exhausted");
    return script_[next_++];
  }

  std::vector<CompletionRequest> requests() const {
    std::lock_guard lock(mu_);
    return log_;
  }
  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return log_.size();
  }
  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    return script_.size() - next_;
  }

 private:
  std::vector<std::string> script_;
  std::size_t next_ = 0;
  std::vector<CompletionRequest> log_;
  mutable std::mutex mu_;
};

inline std::shared_ptr<ScriptedBackend> make_scripted_backend(std::vector<std::string> script) {
  if (script.empty()) throw std::invalid_argument("scripted backend needs at least one response");
  return std::make_shared<ScriptedBackend>(std::move(script));
}

// Script files are a JSON array of strings or {"responses": [...]}.
inline std::vector<std::string> load_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script '" + path + "'");
  auto j = nlohmann::json::parse(in);
  if (j.is_object() && j.contains("responses")) j = j.at("responses");
  if (!j.is_array()) throw std::runtime_error("script must be a JSON array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) out.push_back(e.get<std::string>());
  return out;
}

struct BackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env_var = "OPENAI_API_KEY";
  int max_retries = 3;
  int initial_backoff_ms = 500;
  int request_timeout_ms = 120000;
  int max_in_flight = 4;
};

struct HttpResponse {
  int status = 0;  // 0: transport failure or timeout
  std::string body;
  std::string error;
};

using HttpTransport =
    std::function<HttpResponse(const std::string& url, const httplib::Headers& headers, const std::string& body)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

// POSTs through cpp-httplib. `url` is absolute: scheme://host[:port]/path.
inline HttpResponse httplib_post(const std::string& url, const httplib::Headers& headers, const std::string& body,
                                 int timeout_ms) {
  auto scheme_end = url.find("://");
  auto path_begin = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string origin = path_begin == std::string::npos ? url : url.substr(0, path_begin);
  std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

  HttpResponse out;
  try {
    httplib::Client cli(origin);
    auto timeout = std::chrono::milliseconds(timeout_ms);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

class OpenAIBackend : public Backend {
 public:
  explicit OpenAIBackend(BackendConfig config, HttpTransport transport = {}, Sleeper sleeper = {})
      : config_(std::move(config)),
        transport_(std::move(transport)),
        sleeper_(std::move(sleeper)),
        in_flight_(config_.max_in_flight) {
    if (config_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
    if (config_.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (config_.initial_backoff_ms < 1) throw std::invalid_argument("initial_backoff_ms must be >= 1");
    if (config_.request_timeout_ms < 1) throw std::invalid_argument("request_timeout_ms must be >= 1");
    if (!transport_) {
      int timeout = config_.request_timeout_ms;
      transport_ = [timeout](const std::string& url, const httplib::Headers& h, const std::string& b) {
        return httplib_post(url, h, b, timeout);
      };
    }
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  const BackendConfig& config() const { return config_; }

  std::string complete(const CompletionRequest& request) override {
    request.validate();
    const char* key = std::getenv(config_.api_key_env_var.c_str());
    if (key == nullptr || *key == '\0') {
      throw BackendError(BackendError::Kind::kConfig, "environment variable " + config_.api_key_env_var + " is not set");
    }
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
    std::string url = config_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    url += "/chat/completions";
    const std::string body = request_body(request).dump();

    auto backoff = std::chrono::milliseconds(config_.initial_backoff_ms);
    for (int attempt = 0;; ++attempt) {
      HttpResponse res;
      {
        in_flight_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{in_flight_};
        res = transport_(url, headers, body);
      }
      if (res.status == 200) return parse_content(res.body);
      if (res.status == 401 || res.status == 403) {
        throw BackendError(BackendError::Kind::kAuth, "authentication failed (HTTP " + std::to_string(res.status) + ")");
      }
      bool transient = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
      std::string why = res.status == 0 ? "transport error: " + res.error : "HTTP " + std::to_string(res.status);
      if (!transient) throw BackendError(BackendError::Kind::kHttp, why + ": " + res.body.substr(0, 200));
      if (attempt >= config_.max_retries) {
        throw BackendError(BackendError::Kind::kRetriesExhausted,
                           "retries exhausted after " + std::to_string(attempt + 1) + " attempts (" + why + ")");
      }
      spdlog::debug("transient failure ({}), retrying in {} ms", why, backoff.count());
      sleeper_(backoff);
      backoff *= 2;
    }
  }

  static std::string parse_content(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw BackendError(BackendError::Kind::kMalformed, std::string("malformed response body: ") + e.what());
    }
    const nlohmann::json* content = nullptr;
    if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
      const auto& choice = j["choices"][0];
      if (choice.is_object() && choice.contains("message") && choice["message"].is_object() &&
          choice["message"].contains("content")) {
        content = &choice["message"]["content"];
      }
    }
    if (content == nullptr) throw BackendError(BackendError::Kind::kMalformed, "response has no choices[0].message.content");
    if (content->is_null()) throw BackendError(BackendError::Kind::kEmpty, "empty completion content");
    if (!content->is_string()) throw BackendError(BackendError::Kind::kMalformed, "content is not a string");
    const auto& text = content->get_ref<const std::string&>();
    if (text.empty()) throw BackendError(BackendError::Kind::kEmpty, "empty completion content");
    return text;
  }

 private:
  BackendConfig config_;
  HttpTransport transport_;
  Sleeper sleeper_;
  std::counting_semaphore<> in_flight_;
};

}  // namespace agentsbench
