#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "halo/core.hpp"

namespace halo {

/// Content of the last `\boxed{...}` (or `\fbox{...}`) in a solution, braces balanced.
inline std::optional<std::string> extract_boxed(std::string_view solution) {
  std::optional<std::string> last;
  std::size_t last_pos = 0;
  for (std::string_view cmd : {std::string_view("\\boxed"), std::string_view("\\fbox")}) {
    for (auto pos = solution.find(cmd); pos != std::string_view::npos; pos = solution.find(cmd, pos + 1)) {
      auto open = pos + cmd.size();
      while (open < solution.size() && solution[open] == ' ') ++open;
      if (open >= solution.size() || solution[open] != '{') continue;
      int depth = 0;
      for (auto i = open; i < solution.size(); ++i) {
        if (solution[i] == '{') ++depth;
        if (solution[i] == '}' && --depth == 0) {
          if (!last || pos >= last_pos) {
            last = std::string(solution.substr(open + 1, i - open - 1));
            last_pos = pos;
          }
          break;
        }
      }
    }
  }
  return last;
}

inline bool grade_choice(std::string_view predicted, std::string_view gold) {
  const auto g = normalize_answer(gold, TaskKind::Choice);
  if (g.size() != 1 || g[0] < 'a' || g[0] > 'd') {
    throw Error(Errc::Validation, "choice gold must be one of a-d, got '" + std::string(gold) + "'");
  }
  const auto p = normalize_answer(predicted, TaskKind::Choice);
  if (p.empty() || p[0] != g[0]) return false;
  return p.size() == 1 || !std::isalnum(static_cast<unsigned char>(p[1]));
}

inline bool grade_math(std::string_view predicted, std::string_view gold) {
  return normalize_answer(predicted, TaskKind::Math) == normalize_answer(gold, TaskKind::Math);
}

enum class CodeVerdict { Pass, Fail, Timeout, Error };

inline std::string_view to_string(CodeVerdict v) {
  switch (v) {
    case CodeVerdict::Pass: return "pass";
    case CodeVerdict::Fail: return "fail";
    case CodeVerdict::Timeout: return "timeout";
    case CodeVerdict::Error: return "error";
  }
  return "error";
}

inline CodeVerdict parse_code_verdict(std::string_view s) {
  if (s == "pass") return CodeVerdict::Pass;
  if (s == "fail") return CodeVerdict::Fail;
  if (s == "timeout") return CodeVerdict::Timeout;
  if (s == "error") return CodeVerdict::Error;
  throw Error(Errc::Validation, "unknown code verdict '" + std::string(s) + "'");
}

}  // namespace halo
