#pragma once

// OpenAI-compatible chat-completions backend.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "halo/gateway.hpp"

namespace halo {

struct HttpReply {
  int status = 0;
  std::string body;
  /// Set when no HTTP response arrived at all.
  std::optional<GatewayErrorKind> failure;
  std::string failure_detail;
};

/// POSTs a JSON body; implementations never throw.
using HttpTransport = std::function<HttpReply(const std::string& url, const std::string& body,
                                              const std::vector<std::pair<std::string, std::string>>& headers)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  std::chrono::milliseconds delay_before_retry(int retry) const {
    double ms = static_cast<double>(base_delay.count());
    for (int i = 1; i < retry; ++i) ms *= factor;
    return std::chrono::milliseconds(static_cast<long long>(ms));
  }
};

struct LiveBackendConfig {
  std::string base_url;
  std::string model_name;
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
};

namespace detail {

inline HttpReply httplib_post(const std::string& url, const std::string& body,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              std::chrono::seconds timeout) {
  HttpReply reply;
  // Split scheme://host[:port] from the path.
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  try {
    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      auto err = res.error();
      reply.failure = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                          ? GatewayErrorKind::Timeout
                          : GatewayErrorKind::Transport;
      reply.failure_detail = httplib::to_string(err);
      return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
  } catch (const std::exception& e) {
    reply.failure = GatewayErrorKind::Transport;
    reply.failure_detail = e.what();
  }
  return reply;
}

}  // namespace detail

class LiveBackend : public ChatBackend {
 public:
  explicit LiveBackend(LiveBackendConfig config, HttpTransport transport = {}, Sleeper sleeper = {})
      : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    if (!transport_) {
      transport_ = [timeout = config_.timeout](const std::string& url, const std::string& body,
                                               const auto& headers) {
        return detail::httplib_post(url, body, headers, timeout);
      };
    }
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  std::string endpoint() const {
    auto base = config_.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base + "/v1/chat/completions";
  }

  nlohmann::json payload(const ChatRequest& request) const {
    auto messages = nlohmann::json::array();
    if (!request.system_prompt.empty()) {
      messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    }
    for (const auto& m : request.user_messages) messages.push_back({{"role", "user"}, {"content", m}});
    return {{"model", config_.model_name},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens},
            {"seed", request.seed}};
  }

  ChatResponse complete(const ChatRequest& request) override {
    const auto body = payload(request).dump();
    std::vector<std::pair<std::string, std::string>> headers{{"Content-Type", "application/json"}};
    if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);

    std::vector<std::chrono::milliseconds> delays;
    auto publish = [&] {
      std::lock_guard lock(delays_mutex_);
      last_delays_ = delays;
    };
    for (int attempt = 1;; ++attempt) {
      auto reply = transport_(endpoint(), body, headers);
      GatewayErrorKind kind;
      std::string detail;
      bool retryable = true;
      if (reply.failure) {
        kind = *reply.failure;
        detail = reply.failure_detail;
      } else if (reply.status == 429) {
        kind = GatewayErrorKind::RateLimited;
        detail = "HTTP 429";
      } else if (reply.status == 408) {
        kind = GatewayErrorKind::Timeout;
        detail = "HTTP 408";
      } else if (reply.status >= 500) {
        kind = GatewayErrorKind::Transport;
        detail = "HTTP " + std::to_string(reply.status);
      } else if (reply.status < 200 || reply.status >= 300) {
        kind = GatewayErrorKind::Transport;
        detail = "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 500);
        retryable = false;
      } else {
        publish();
        return parse_reply(reply.body, attempt);
      }
      if (!retryable || attempt > config_.retry.max_retries) {
        publish();
        throw GatewayError(kind, detail, attempt);
      }
      auto delay = config_.retry.delay_before_retry(attempt);
      delays.push_back(delay);
      sleeper_(delay);
    }
  }

  /// Backoff delays used by the most recent complete() call.
  std::vector<std::chrono::milliseconds> last_delays() const {
    std::lock_guard lock(delays_mutex_);
    return last_delays_;
  }

  std::string id() const override { return "live:" + config_.model_name; }

 private:
  ChatResponse parse_reply(const std::string& body, int attempts) const {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw GatewayError(GatewayErrorKind::MalformedResponse, "body is not JSON", attempts);
    ChatResponse response;
    try {
      const auto& content = j.at("choices").at(0).at("message").at("content");
      response.text = content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw GatewayError(GatewayErrorKind::MalformedResponse, e.what(), attempts);
    }
    if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
      response.prompt_tokens = it->value("prompt_tokens", 0);
      response.completion_tokens = it->value("completion_tokens", 0);
    }
    response.backend_id = id();
    response.attempts = attempts;
    return response;
  }

  LiveBackendConfig config_;
  HttpTransport transport_;
  Sleeper sleeper_;
  mutable std::mutex delays_mutex_;
  std::vector<std::chrono::milliseconds> last_delays_;
};

}  // namespace halo
