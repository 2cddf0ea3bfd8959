#pragma once

// Every agent invocation goes through a Gateway, which forwards to a pluggable
// ChatBackend and keeps an ordered log of (routing key, request digest, reply).

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/digest.hpp"
#include "halo/error.hpp"

namespace halo {

struct ChatRequest {
  /// Role name of the calling agent; scripted fixtures are keyed by it.
  std::string routing_key;
  std::string system_prompt;
  std::vector<std::string> user_messages;
  double temperature = 0.8;
  int max_tokens = 2048;
  std::int64_t seed = 10;

  void validate() const {
    if (!(temperature >= 0.0)) throw Error(Errc::Validation, "temperature must be >= 0");
    if (max_tokens < 1) throw Error(Errc::Validation, "max_tokens must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"routing_key", routing_key},   {"system_prompt", system_prompt},
            {"user_messages", user_messages}, {"temperature", temperature},
            {"max_tokens", max_tokens},       {"seed", seed}};
  }

  std::string digest() const { return sha256_hex(to_json().dump()); }
};

/// Decoding parameters shared by every agent call of a run.
struct Decoding {
  double temperature = 0.8;
  int max_tokens = 2048;
  std::int64_t seed = 10;

  ChatRequest request(std::string routing_key, std::string system_prompt,
                      std::vector<std::string> user_messages) const {
    return ChatRequest{std::move(routing_key), std::move(system_prompt), std::move(user_messages),
                       temperature, max_tokens, seed};
  }
};

struct ChatResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::string backend_id;
  int attempts = 1;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// One entry of the gateway call log, also the unit of a recording file.
struct CallRecord {
  std::string routing_key;
  std::string request_digest;
  std::string response_text;
  int attempts = 1;

  bool operator==(const CallRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const CallRecord& r) {
  j = nlohmann::json{{"routing_key", r.routing_key},
                     {"request_digest", r.request_digest},
                     {"response_text", r.response_text},
                     {"attempts", r.attempts}};
}

inline void from_json(const nlohmann::json& j, CallRecord& r) {
  j.at("routing_key").get_to(r.routing_key);
  j.at("request_digest").get_to(r.request_digest);
  j.at("response_text").get_to(r.response_text);
  r.attempts = j.value("attempts", 1);
}

/// Raised when a replayed run stops matching its recording.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string stream, std::size_t index, const std::string& detail)
      : Error(Errc::ReplayDivergence,
              "first divergence in " + stream + " at index " + std::to_string(index) + ": " + detail),
        stream_(std::move(stream)),
        index_(index) {}

  const std::string& stream() const noexcept { return stream_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string stream_;
  std::size_t index_;
};

// ---------------------------------------------------------------------------

/// Canned replies keyed by routing key, consumed in order.
class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::map<std::string, std::vector<std::string>> script) {
    for (auto& [key, replies] : script) scripts_[key] = {replies.begin(), replies.end()};
  }

  using Script = std::map<std::string, std::vector<std::string>>;

  /// Fixture form: {"planner": ["reply 1", "reply 2"], ...}.
  static Script parse_fixture(const nlohmann::json& fixture) {
    if (!fixture.is_object()) throw Error(Errc::Validation, "scripted fixture must be a JSON object");
    std::map<std::string, std::vector<std::string>> script;
    for (const auto& [key, replies] : fixture.items()) {
      if (!replies.is_array()) {
        throw Error(Errc::Validation, "scripted fixture key '" + key + "' must map to an array");
      }
      script[key] = replies.get<std::vector<std::string>>();
    }
    return script;
  }

  void push(const std::string& key, std::string reply) {
    std::lock_guard lock(mutex_);
    scripts_[key].push_back(std::move(reply));
  }

  ChatResponse complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    auto it = scripts_.find(request.routing_key);
    if (it == scripts_.end() || it->second.empty()) {
      throw GatewayError(GatewayErrorKind::ScriptExhausted,
                         "no scripted reply left for '" + request.routing_key + "'");
    }
    ChatResponse response;
    response.text = std::move(it->second.front());
    it->second.pop_front();
    response.backend_id = id();
    return response;
  }

  std::size_t remaining(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = scripts_.find(key);
    return it == scripts_.end() ? 0 : it->second.size();
  }

  std::string id() const override { return "scripted"; }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<std::string>> scripts_;
};

/// Serves a recorded call log back in order, verifying each request matches.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(std::vector<CallRecord> records) : records_(std::move(records)) {}

  ChatResponse complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    const auto index = cursor_;
    if (index >= records_.size()) {
      throw DivergenceError("gateway calls", index,
                            "replay requested call '" + request.routing_key +
                                "' beyond the " + std::to_string(records_.size()) + " recorded");
    }
    const auto& rec = records_[index];
    if (rec.routing_key != request.routing_key) {
      throw DivergenceError("gateway calls", index,
                            "routing key '" + request.routing_key + "' but recorded '" +
                                rec.routing_key + "'");
    }
    auto digest = request.digest();
    if (rec.request_digest != digest) {
      throw DivergenceError("gateway calls", index,
                            "request digest differs for '" + request.routing_key + "'");
    }
    ++cursor_;
    ChatResponse response;
    response.text = rec.response_text;
    response.attempts = rec.attempts;
    response.backend_id = id();
    return response;
  }

  std::size_t consumed() const {
    std::lock_guard lock(mutex_);
    return cursor_;
  }
  std::size_t size() const noexcept { return records_.size(); }

  std::string id() const override { return "replay"; }

 private:
  mutable std::mutex mutex_;
  std::vector<CallRecord> records_;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------

class Gateway {
 public:
  using Observer = std::function<void(const CallRecord&)>;

  explicit Gateway(std::shared_ptr<ChatBackend> backend) : backend_(std::move(backend)) {}

  ChatResponse complete(const ChatRequest& request) {
    request.validate();
    auto response = backend_->complete(request);
    CallRecord record{request.routing_key, request.digest(), response.text, response.attempts};
    std::lock_guard lock(mutex_);
    log_.push_back(record);
    if (observer_) observer_(record);
    return response;
  }

  void set_observer(Observer observer) {
    std::lock_guard lock(mutex_);
    observer_ = std::move(observer);
  }

  std::vector<CallRecord> calls() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  std::size_t call_count(const std::string& routing_key) const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& r : log_) n += r.routing_key == routing_key;
    return n;
  }

  ChatBackend& backend() { return *backend_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  mutable std::mutex mutex_;
  std::vector<CallRecord> log_;
  Observer observer_;
};

/// Recording file: JSON array of call records in call order.
inline nlohmann::json recording_to_json(const std::vector<CallRecord>& calls) { return calls; }

inline std::vector<CallRecord> recording_from_json(const nlohmann::json& j) {
  return j.get<std::vector<CallRecord>>();
}

// ---------------------------------------------------------------------------

namespace detail {

inline bool is_repairable(const Error& e) {
  if (auto* g = dynamic_cast<const GatewayError*>(&e)) {
    return g->kind() == GatewayErrorKind::MalformedResponse;
  }
  return e.code() == Errc::MissingSection || e.code() == Errc::NoRoles;
}

}  // namespace detail

/// Issues a structured-output call and parses the reply. A reply the parser
/// rejects as malformed is re-asked once with a repair instruction appended;
/// the second rejection propagates.
template <class Parse>
auto ask_structured(Gateway& gateway, ChatRequest request, Parse&& parse,
                    const std::string& repair_instruction) -> decltype(parse(std::string{})) {
  auto first = gateway.complete(request);
  try {
    return parse(first.text);
  } catch (const Error& e) {
    if (!detail::is_repairable(e)) throw;
    request.user_messages.push_back("Your previous reply was rejected (" + std::string(e.what()) +
                                    "). " + repair_instruction);
  }
  auto second = gateway.complete(request);
  return parse(second.text);
}

}  // namespace halo
