#pragma once

// Chat-completions client: request body {model, messages, temperature,
// max_tokens}, bearer auth from an environment variable, retry with
// exponential backoff on transport failures and 5xx. The transport is
// pluggable so tests and offline runs use a deterministic mock.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

namespace scmlab {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

inline void to_json(nlohmann::json& j, const ChatMessage& m) {
  j = {{"role", m.role}, {"content", m.content}};
}

struct ClientConfig {
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string auth_env = "SCMLAB_API_TOKEN";  // empty: no Authorization header
  std::string model_id = "gpt-4o";
  double timeout_s = 60.0;
  int max_transport_retries = 3;
  double backoff_base_s = 1.0;
  int max_tokens = 1024;
  int concurrency = 4;
};

struct TokenUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  long long total_tokens = 0;
};

struct ChatExchange {
  std::vector<ChatMessage> request;
  double temperature = 0.0;
  std::string response;
  double latency_s = 0.0;
  int transport_retries = 0;
  std::optional<TokenUsage> usage;
};

enum class LlmErrorKind { timeout, auth, transport, malformed_response, rejected };

inline const char* to_string(LlmErrorKind k) {
  switch (k) {
    case LlmErrorKind::timeout: return "Timeout";
    case LlmErrorKind::auth: return "AuthError";
    case LlmErrorKind::transport: return "TransportError";
    case LlmErrorKind::malformed_response: return "MalformedResponse";
    case LlmErrorKind::rejected: return "RequestRejected";
  }
  return "?";
}

class LlmError : public std::runtime_error {
public:
  LlmError(LlmErrorKind kind, const std::string& what, int attempts = 0)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), attempts_(attempts) {}

  LlmErrorKind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }

private:
  LlmErrorKind kind_;
  int attempts_;
};

// ---------------------------------------------------------------------------
// Transport

enum class TransportFailure { none, connection, timeout };

struct TransportResponse {
  TransportFailure failure = TransportFailure::none;
  int status = 0;
  std::string body;
  double latency_s = 0.0;
  std::string error;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

class Transport {
public:
  virtual ~Transport() = default;
  virtual TransportResponse post(const std::string& url, const Headers& headers,
                                 const std::string& body, double timeout_s) = 0;
};

/// Wraps assistant text in a minimal chat-completions response body.
inline std::string completion_body(const std::string& content) {
  nlohmann::json j = {
      {"object", "chat.completion"},
      {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}},
                    {"finish_reason", "stop"}}}},
  };
  return j.dump();
}

/// Replies are produced by a function of the parsed request body, so a run
/// is reproducible regardless of call order.
class MockTransport : public Transport {
public:
  using Responder = std::function<TransportResponse(const nlohmann::json& request)>;

  explicit MockTransport(Responder responder) : responder_(std::move(responder)) {}

  static std::shared_ptr<MockTransport> canned(std::string reply) {
    return std::make_shared<MockTransport>([reply = std::move(reply)](const nlohmann::json&) {
      return TransportResponse{TransportFailure::none, 200, completion_body(reply), 0.0, {}};
    });
  }

  /// Plays the given responses in order, then repeats the last one.
  static std::shared_ptr<MockTransport> sequence(std::vector<TransportResponse> responses) {
    auto shared = std::make_shared<std::vector<TransportResponse>>(std::move(responses));
    auto next = std::make_shared<std::size_t>(0);
    return std::make_shared<MockTransport>([shared, next](const nlohmann::json&) {
      const std::size_t i = std::min(*next, shared->size() - 1);
      ++*next;
      return (*shared)[i];
    });
  }

  TransportResponse post(const std::string&, const Headers& headers, const std::string& body,
                         double) override {
    nlohmann::json request = nlohmann::json::parse(body);
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
      headers_.push_back(headers);
    }
    return responder_(request);
  }

  std::vector<nlohmann::json> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }
  std::vector<Headers> request_headers() const {
    std::lock_guard lock(mutex_);
    return headers_;
  }

private:
  Responder responder_;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> requests_;
  std::vector<Headers> headers_;
};

inline TransportResponse ok_reply(const std::string& content) {
  return {TransportFailure::none, 200, completion_body(content), 0.0, {}};
}

inline TransportResponse status_reply(int status, std::string body = "{}") {
  return {TransportFailure::none, status, std::move(body), 0.0, {}};
}

// ---------------------------------------------------------------------------
// Client

class ChatClient {
public:
  using Sleeper = std::function<void(double seconds)>;

  ChatClient(ClientConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = {})
      : config_(std::move(config)),
        transport_(std::move(transport)),
        sleeper_(sleeper ? std::move(sleeper) : default_sleeper()),
        slots_(std::clamp(config_.concurrency, 1, 1024)) {
    if (!(config_.timeout_s > 0.0)) throw std::invalid_argument("timeout must be > 0");
    if (config_.max_transport_retries < 0) throw std::invalid_argument("retries must be >= 0");
  }

  const ClientConfig& config() const noexcept { return config_; }

  /// Returns the first choice's assistant content. `user` tags the request
  /// with the calling agent's id.
  ChatExchange complete(const std::vector<ChatMessage>& messages, double temperature,
                        const std::string& user = {}) {
    Headers headers{{"Content-Type", "application/json"}};
    if (!config_.auth_env.empty()) {
      const char* token = std::getenv(config_.auth_env.c_str());
      if (!token || !*token)
        throw LlmError(LlmErrorKind::auth, "environment variable " + config_.auth_env + " is not set");
      headers.emplace_back("Authorization", std::string("Bearer ") + token);
    }

    nlohmann::json body = {{"model", config_.model_id},
                           {"messages", messages},
                           {"temperature", temperature},
                           {"max_tokens", config_.max_tokens}};
    if (!user.empty()) body["user"] = user;
    const std::string payload = body.dump();

    ChatExchange exchange;
    exchange.request = messages;
    exchange.temperature = temperature;

    struct SlotGuard {
      std::counting_semaphore<1024>& s;
      explicit SlotGuard(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
      ~SlotGuard() { s.release(); }
    } guard(slots_);

    const int attempts = config_.max_transport_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) sleeper_(config_.backoff_base_s * std::pow(2.0, attempt - 1));
      TransportResponse r = transport_->post(config_.endpoint_url, headers, payload, config_.timeout_s);
      exchange.latency_s += r.latency_s;
      exchange.transport_retries = attempt;

      const bool last = attempt + 1 == attempts;
      if (r.failure == TransportFailure::timeout) {
        if (last) throw LlmError(LlmErrorKind::timeout, "request timed out: " + r.error, attempt + 1);
        continue;
      }
      if (r.failure == TransportFailure::connection) {
        if (last) throw LlmError(LlmErrorKind::transport, "connection failed: " + r.error, attempt + 1);
        continue;
      }
      if (r.status == 401 || r.status == 403)
        throw LlmError(LlmErrorKind::auth, "endpoint returned " + std::to_string(r.status), attempt + 1);
      if (r.status == 429 || r.status >= 500) {
        if (last)
          throw LlmError(LlmErrorKind::transport, "endpoint returned " + std::to_string(r.status),
                         attempt + 1);
        continue;
      }
      if (r.status < 200 || r.status >= 300)
        throw LlmError(LlmErrorKind::rejected,
                       "endpoint returned " + std::to_string(r.status) + ": " + r.body, attempt + 1);

      parse_response(r.body, exchange);
      return exchange;
    }
    throw LlmError(LlmErrorKind::transport, "no attempts made");
  }

private:
  static Sleeper default_sleeper() {
    return [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }

  static void parse_response(const std::string& body, ChatExchange& exchange) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw LlmError(LlmErrorKind::malformed_response, "response is not JSON");
    try {
      const auto& content = j.at("choices").at(0).at("message").at("content");
      if (!content.is_string())
        throw LlmError(LlmErrorKind::malformed_response, "message content is not a string");
      exchange.response = content.get<std::string>();
      if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        exchange.usage = TokenUsage{u.value("prompt_tokens", 0LL), u.value("completion_tokens", 0LL),
                                    u.value("total_tokens", 0LL)};
      }
    } catch (const nlohmann::json::exception& e) {
      throw LlmError(LlmErrorKind::malformed_response, e.what());
    }
  }

  ClientConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> slots_;
};

}  // namespace scmlab
