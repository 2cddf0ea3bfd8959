#pragma once

// Shared domain values: task representation, subtasks, roles, status labels,
// quality scores and answer normalization.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/error.hpp"

namespace halo {

using json = nlohmann::json;

enum class TaskKind { Code, Choice, Math };

inline std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Code: return "code";
    case TaskKind::Choice: return "choice";
    case TaskKind::Math: return "math";
  }
  return "math";
}

inline TaskKind parse_task_kind(std::string_view text) {
  if (text == "code") return TaskKind::Code;
  if (text == "choice") return TaskKind::Choice;
  if (text == "math") return TaskKind::Math;
  throw Error(Errc::Validation, "unknown task kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Text helpers

namespace text {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string trim(std::string_view s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && is_space(*b)) ++b;
  while (e != b && is_space(*(e - 1))) --e;
  return std::string(b, e);
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char c : s) {
    if (is_space(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    lines.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// Drops leading blank lines and trailing whitespace but keeps the indentation
// of the first non-blank line.
inline std::string trim_code(std::string_view s) {
  std::size_t first = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '\n') {
      first = i + 1;
    } else if (!is_space(s[i])) {
      break;
    }
    ++i;
  }
  if (i == s.size()) return {};
  auto e = s.size();
  while (e > first && is_space(s[e - 1])) --e;
  return std::string(s.substr(first, e - first));
}

}  // namespace text

// ---------------------------------------------------------------------------
// Answer normalization

namespace detail {

inline std::optional<std::string> last_fenced_block(std::string_view raw) {
  std::optional<std::string> last;
  bool open = false;
  std::string body;
  for (auto line : text::split_lines(raw)) {
    auto stripped = text::trim(line);
    if (!open) {
      if (text::starts_with(stripped, "```")) {
        open = true;
        body.clear();
      }
      continue;
    }
    if (stripped == "```") {
      open = false;
      last = body;
      continue;
    }
    if (!body.empty()) body.push_back('\n');
    body.append(line);
  }
  return last;
}

// Removes one wrapper that encloses the whole string; returns false when none does.
inline bool strip_math_wrapper(std::string& s) {
  static constexpr std::string_view brace_commands[] = {"\\boxed{", "\\fbox{", "\\text{",
                                                        "\\mathrm{", "\\textbf{"};
  for (auto cmd : brace_commands) {
    if (!text::starts_with(s, cmd) || s.back() != '}') continue;
    // The opening brace must match the final closing brace.
    int depth = 0;
    std::size_t close = std::string::npos;
    for (std::size_t i = cmd.size() - 1; i < s.size(); ++i) {
      if (s[i] == '{') ++depth;
      if (s[i] == '}' && --depth == 0) {
        close = i;
        break;
      }
    }
    if (close != s.size() - 1) continue;
    s = s.substr(cmd.size(), s.size() - cmd.size() - 1);
    return true;
  }
  static constexpr std::pair<std::string_view, std::string_view> delimiters[] = {
      {"$$", "$$"}, {"\\[", "\\]"}, {"\\(", "\\)"}, {"$", "$"}};
  for (auto [open, close] : delimiters) {
    if (s.size() >= open.size() + close.size() && text::starts_with(s, open) &&
        text::ends_with(s, close)) {
      s = s.substr(open.size(), s.size() - open.size() - close.size());
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Canonical form used for grading and for deciding whether two answers agree.
inline std::string normalize_answer(std::string_view raw, TaskKind kind) {
  if (kind == TaskKind::Code) {
    if (auto block = detail::last_fenced_block(raw)) return text::trim_code(*block);
    return text::trim_code(raw);
  }
  std::string s = text::lower(text::collapse_whitespace(raw));
  for (bool changed = true; changed;) {
    changed = false;
    if (kind == TaskKind::Math && !s.empty() && detail::strip_math_wrapper(s)) changed = true;
    while (!s.empty() && s.back() == '.') {
      s.pop_back();
      changed = true;
    }
    auto trimmed = text::trim(s);
    if (trimmed != s) {
      s = std::move(trimmed);
      changed = true;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Quality score and status label

/// A judge-assigned quality value, always within [0, 1].
class QualityScore {
 public:
  QualityScore() = default;

  static QualityScore make(double x) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
      std::ostringstream os;
      os << "quality score " << x << " is outside [0, 1]";
      throw Error(Errc::Validation, os.str());
    }
    return QualityScore(x);
  }

  double value() const noexcept { return value_; }
  friend bool operator==(QualityScore, QualityScore) = default;

 private:
  explicit QualityScore(double v) : value_(v) {}
  double value_ = 0.0;
};

inline QualityScore make_quality_score(double x) { return QualityScore::make(x); }

enum class StatusLabel { Success, Fail, Continue };

inline std::string_view to_string(StatusLabel label) {
  switch (label) {
    case StatusLabel::Success: return "success";
    case StatusLabel::Fail: return "fail";
    case StatusLabel::Continue: return "continue";
  }
  return "continue";
}

inline StatusLabel parse_status_label(std::string_view raw) {
  auto s = text::lower(text::trim(raw));
  if (s == "success") return StatusLabel::Success;
  if (s == "fail") return StatusLabel::Fail;
  if (s == "continue") return StatusLabel::Continue;
  throw Error(Errc::Validation, "unknown status label '" + std::string(raw) + "'");
}

// ---------------------------------------------------------------------------
// Domain records

struct StructuredTaskRepresentation {
  std::string task_type;
  std::string core_intent;
  std::vector<std::string> key_details;

  bool operator==(const StructuredTaskRepresentation&) const = default;
};

struct QueryBundle {
  std::string raw_query;
  std::string initial_template;
  std::string optimized_prompt;
  std::optional<std::string> refined_prompt;
  StructuredTaskRepresentation representation;

  bool operator==(const QueryBundle&) const = default;

  /// The prompt handed to the reasoning stack.
  const std::string& prompt() const { return refined_prompt ? *refined_prompt : raw_query; }
};

struct Subtask {
  int index = 0;
  std::string description;
  bool is_stop = false;

  static Subtask stop() { return Subtask{0, {}, true}; }
  bool operator==(const Subtask&) const = default;
};

struct HistoryEntry {
  Subtask subtask;
  std::string answer;
  double best_score = 0.0;

  bool operator==(const HistoryEntry&) const = default;
};

/// Append-only record of completed subtasks, ordered by index.
class ExecutionHistory {
 public:
  ExecutionHistory() = default;

  void append(HistoryEntry entry) {
    int expected = static_cast<int>(entries_.size()) + 1;
    if (entry.subtask.is_stop || entry.subtask.index != expected) {
      throw Error(Errc::Validation, "history entry index " +
                                        std::to_string(entry.subtask.index) + " but expected " +
                                        std::to_string(expected));
    }
    (void)QualityScore::make(entry.best_score);
    entries_.push_back(std::move(entry));
  }

  const std::vector<HistoryEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  bool operator==(const ExecutionHistory&) const = default;

 private:
  std::vector<HistoryEntry> entries_;
};

struct RoleSpec {
  std::string role_name;
  std::string system_prompt;
  std::string rationale;

  bool operator==(const RoleSpec&) const = default;
};

struct IntermediateOutput {
  RoleSpec producer;
  std::string content;
  StatusLabel label = StatusLabel::Continue;
  QualityScore score;

  bool operator==(const IntermediateOutput&) const = default;
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, TaskKind k) { j = std::string(to_string(k)); }
inline void from_json(const json& j, TaskKind& k) { k = parse_task_kind(j.get<std::string>()); }

inline void to_json(json& j, StatusLabel l) { j = std::string(to_string(l)); }
inline void from_json(const json& j, StatusLabel& l) { l = parse_status_label(j.get<std::string>()); }

inline void to_json(json& j, QualityScore s) { j = s.value(); }
inline void from_json(const json& j, QualityScore& s) { s = QualityScore::make(j.get<double>()); }

inline void to_json(json& j, const StructuredTaskRepresentation& f) {
  j = json{{"task_type", f.task_type}, {"core_intent", f.core_intent}, {"key_details", f.key_details}};
}
inline void from_json(const json& j, StructuredTaskRepresentation& f) {
  j.at("task_type").get_to(f.task_type);
  j.at("core_intent").get_to(f.core_intent);
  j.at("key_details").get_to(f.key_details);
}

/// Stable key-value text form of F: compact JSON with sorted keys.
inline std::string to_text(const StructuredTaskRepresentation& f) { return json(f).dump(); }
inline StructuredTaskRepresentation representation_from_text(std::string_view s) {
  return json::parse(s).get<StructuredTaskRepresentation>();
}

inline void to_json(json& j, const QueryBundle& b) {
  j = json{{"raw_query", b.raw_query},
           {"initial_template", b.initial_template},
           {"optimized_prompt", b.optimized_prompt},
           {"refined_prompt", b.refined_prompt ? json(*b.refined_prompt) : json(nullptr)},
           {"representation", b.representation}};
}
inline void from_json(const json& j, QueryBundle& b) {
  j.at("raw_query").get_to(b.raw_query);
  j.at("initial_template").get_to(b.initial_template);
  j.at("optimized_prompt").get_to(b.optimized_prompt);
  const auto& r = j.at("refined_prompt");
  b.refined_prompt = r.is_null() ? std::nullopt : std::optional<std::string>(r.get<std::string>());
  j.at("representation").get_to(b.representation);
}

inline void to_json(json& j, const Subtask& t) {
  j = json{{"index", t.index}, {"description", t.description}, {"is_stop", t.is_stop}};
}
inline void from_json(const json& j, Subtask& t) {
  j.at("index").get_to(t.index);
  j.at("description").get_to(t.description);
  j.at("is_stop").get_to(t.is_stop);
}

inline void to_json(json& j, const HistoryEntry& e) {
  j = json{{"subtask", e.subtask}, {"answer", e.answer}, {"best_score", e.best_score}};
}
inline void from_json(const json& j, HistoryEntry& e) {
  j.at("subtask").get_to(e.subtask);
  j.at("answer").get_to(e.answer);
  j.at("best_score").get_to(e.best_score);
}

inline void to_json(json& j, const ExecutionHistory& h) { j = json{{"entries", h.entries()}}; }
inline void from_json(const json& j, ExecutionHistory& h) {
  h = ExecutionHistory{};
  for (const auto& e : j.at("entries")) h.append(e.get<HistoryEntry>());
}

inline void to_json(json& j, const RoleSpec& r) {
  j = json{{"role_name", r.role_name}, {"system_prompt", r.system_prompt}, {"rationale", r.rationale}};
}
inline void from_json(const json& j, RoleSpec& r) {
  j.at("role_name").get_to(r.role_name);
  j.at("system_prompt").get_to(r.system_prompt);
  r.rationale = j.value("rationale", std::string{});
}

inline void to_json(json& j, const IntermediateOutput& o) {
  j = json{{"producer", o.producer}, {"content", o.content}, {"label", o.label}, {"score", o.score}};
}
inline void from_json(const json& j, IntermediateOutput& o) {
  j.at("producer").get_to(o.producer);
  j.at("content").get_to(o.content);
  j.at("label").get_to(o.label);
  j.at("score").get_to(o.score);
}

}  // namespace halo
