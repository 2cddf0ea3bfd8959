#pragma once

#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

#include "halo/error.hpp"

namespace halo {

enum class JsonShape { Object, Array };

namespace detail {

// Index one past the bracket that closes the one at `start`, skipping string
// literals; npos when it never closes.
inline std::size_t match_bracket(std::string_view text, std::size_t start) {
  const char open = text[start];
  const char close = open == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return c == close ? i + 1 : std::string_view::npos;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Last well-formed top-level JSON value of the requested shape inside free text.
inline std::optional<nlohmann::json> find_last_json(std::string_view text, JsonShape shape) {
  const char opener = shape == JsonShape::Object ? '{' : '[';
  std::optional<nlohmann::json> last;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != opener) {
      ++i;
      continue;
    }
    auto end = detail::match_bracket(text, i);
    if (end != std::string_view::npos) {
      auto parsed = nlohmann::json::parse(text.substr(i, end - i), nullptr, false);
      if (!parsed.is_discarded()) {
        last = std::move(parsed);
        i = end;
        continue;
      }
    }
    ++i;
  }
  return last;
}

/// Parses the last JSON object embedded in an agent reply, tolerating prose and code fences.
inline nlohmann::json extract_json_block(std::string_view text, JsonShape shape = JsonShape::Object) {
  if (auto found = find_last_json(text, shape)) return *found;
  throw malformed(shape == JsonShape::Object ? "no well-formed JSON object in reply"
                                             : "no well-formed JSON array in reply");
}

}  // namespace halo
