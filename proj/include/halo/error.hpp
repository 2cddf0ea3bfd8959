#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace halo {

enum class Errc {
  Validation,
  EmptyField,
  MissingSection,
  NoRoles,
  NoOutput,
  NoAnswer,
  Gateway,
  ShimUnavailable,
  Config,
  TraceParse,
  ReplayDivergence,
  Dataset,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::Validation: return "Validation";
    case Errc::EmptyField: return "EmptyField";
    case Errc::MissingSection: return "MissingSection";
    case Errc::NoRoles: return "NoRoles";
    case Errc::NoOutput: return "NoOutput";
    case Errc::NoAnswer: return "NoAnswer";
    case Errc::Gateway: return "Gateway";
    case Errc::ShimUnavailable: return "ShimUnavailable";
    case Errc::Config: return "Config";
    case Errc::TraceParse: return "TraceParse";
    case Errc::ReplayDivergence: return "ReplayDivergence";
    case Errc::Dataset: return "Dataset";
  }
  return "Unknown";
}

/// Base exception for every failure the engine reports.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

enum class GatewayErrorKind { Transport, RateLimited, Timeout, MalformedResponse, ScriptExhausted };

inline std::string_view to_string(GatewayErrorKind kind) {
  switch (kind) {
    case GatewayErrorKind::Transport: return "Transport";
    case GatewayErrorKind::RateLimited: return "RateLimited";
    case GatewayErrorKind::Timeout: return "Timeout";
    case GatewayErrorKind::MalformedResponse: return "MalformedResponse";
    case GatewayErrorKind::ScriptExhausted: return "ScriptExhausted";
  }
  return "Unknown";
}

class GatewayError : public Error {
 public:
  GatewayError(GatewayErrorKind kind, const std::string& detail, int attempts = 1)
      : Error(Errc::Gateway, std::string(to_string(kind)) + " after " + std::to_string(attempts) +
                                 " attempt(s): " + detail),
        kind_(kind),
        detail_(detail),
        attempts_(attempts) {}

  GatewayErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }
  int attempts() const noexcept { return attempts_; }

 private:
  GatewayErrorKind kind_;
  std::string detail_;
  int attempts_;
};

inline GatewayError malformed(const std::string& detail) {
  return GatewayError(GatewayErrorKind::MalformedResponse, detail);
}

}  // namespace halo
