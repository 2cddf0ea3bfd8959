#pragma once

// Engine configuration: one JSON document, validated on load. Unknown keys are
// rejected by name. The API key never lives here; it comes from HALO_API_KEY.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "halo/core.hpp"
#include "halo/gateway.hpp"
#include "halo/reasoning.hpp"
#include "halo/search.hpp"

namespace halo {

inline constexpr const char* kApiKeyEnv = "HALO_API_KEY";

struct Ablations {
  bool no_refine = false;
  bool single_step = false;
  bool operator==(const Ablations&) const = default;
};

struct Tools {
  bool code_interpreter = false;
  bool operator==(const Tools&) const = default;
};

struct EngineConfig {
  std::string model_name = "gpt-4o";
  std::string base_url = "https://api.openai.com";
  double temperature = 0.8;
  int max_tokens = 2048;
  std::int64_t seed = 10;
  double alpha = 1.414;
  double lambda_success = 1.0;
  double lambda_fail = -1.0;
  double lambda_continue = 0.0;
  RunBudget budgets;
  Ablations ablations;
  Tools tools;
  TaskKind task_kind = TaskKind::Math;

  bool operator==(const EngineConfig&) const = default;

  void validate() const {
    auto bad = [](const std::string& key, const std::string& why) {
      throw Error(Errc::Config, "'" + key + "' " + why);
    };
    if (model_name.empty()) bad("model_name", "must not be empty");
    if (base_url.empty()) bad("base_url", "must not be empty");
    if (!std::isfinite(temperature) || temperature < 0.0) bad("temperature", "must be a finite number >= 0");
    if (max_tokens < 1) bad("max_tokens", "must be >= 1");
    if (!std::isfinite(alpha) || alpha < 0.0) bad("alpha", "must be a finite number >= 0");
    for (auto [key, v] : {std::pair{"lambda_success", lambda_success}, std::pair{"lambda_fail", lambda_fail},
                          std::pair{"lambda_continue", lambda_continue}}) {
      if (!std::isfinite(v)) bad(key, "must be finite");
    }
    auto positive = [&](const char* key, int v) {
      if (v < 1) bad(std::string("budgets.") + key, "must be >= 1");
    };
    positive("max_subtasks", budgets.max_subtasks);
    positive("mcts_iterations", budgets.mcts_iterations);
    positive("simulation_depth", budgets.simulation_depth);
    positive("max_roles_per_subtask", budgets.max_roles_per_subtask);
  }

  Decoding decoding() const { return Decoding{temperature, max_tokens, seed}; }
  ImpactFactors impact_factors() const { return ImpactFactors{lambda_success, lambda_fail, lambda_continue}; }

  SearchOptions search_options() const {
    SearchOptions s;
    s.alpha = alpha;
    s.lambda = impact_factors();
    s.iterations = budgets.mcts_iterations;
    s.simulation_depth = budgets.simulation_depth;
    return s;
  }
};

inline nlohmann::json to_json(const EngineConfig& c) {
  return {{"model_name", c.model_name},
          {"base_url", c.base_url},
          {"temperature", c.temperature},
          {"max_tokens", c.max_tokens},
          {"seed", c.seed},
          {"alpha", c.alpha},
          {"lambda_success", c.lambda_success},
          {"lambda_fail", c.lambda_fail},
          {"lambda_continue", c.lambda_continue},
          {"budgets", c.budgets},
          {"ablations", {{"no_refine", c.ablations.no_refine}, {"single_step", c.ablations.single_step}}},
          {"tools", {{"code_interpreter", c.tools.code_interpreter}}},
          {"task_kind", c.task_kind}};
}

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw Error(Errc::Config, where("") + " must be a JSON object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw Error(Errc::Config, "'" + where(key) + "' must be a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw Error(Errc::Config, "'" + where(key) + "' must be a number");
        if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer()) throw Error(Errc::Config, "'" + where(key) + "' must be an integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw Error(Errc::Config, "'" + where(key) + "' must be a string");
      }
      it->get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::Config, "'" + where(key) + "': " + e.what());
    } catch (const Error& e) {
      if (e.code() == Errc::Config) throw;
      throw Error(Errc::Config, "'" + where(key) + "': " + e.what());
    }
  }

  ConfigReader child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return ConfigReader(it == j_.end() ? empty : *it, where(key));
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error(Errc::Config, "unknown configuration key '" + where(key) + "'");
    }
  }

 private:
  std::string where(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "configuration" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Builds a config from JSON: missing keys keep their defaults, unknown keys are errors.
inline EngineConfig config_from_json(const nlohmann::json& j) {
  EngineConfig c;
  detail::ConfigReader root(j, "");
  root.read("model_name", c.model_name);
  root.read("base_url", c.base_url);
  root.read("temperature", c.temperature);
  root.read("max_tokens", c.max_tokens);
  root.read("seed", c.seed);
  root.read("alpha", c.alpha);
  root.read("lambda_success", c.lambda_success);
  root.read("lambda_fail", c.lambda_fail);
  root.read("lambda_continue", c.lambda_continue);
  std::string kind(to_string(c.task_kind));
  root.read("task_kind", kind);
  try {
    c.task_kind = parse_task_kind(kind);
  } catch (const Error& e) {
    throw Error(Errc::Config, std::string("'task_kind': ") + e.what());
  }

  auto budgets = root.child("budgets");
  budgets.read("max_subtasks", c.budgets.max_subtasks);
  budgets.read("mcts_iterations", c.budgets.mcts_iterations);
  budgets.read("simulation_depth", c.budgets.simulation_depth);
  budgets.read("max_roles_per_subtask", c.budgets.max_roles_per_subtask);
  budgets.reject_unknown();

  auto ablations = root.child("ablations");
  ablations.read("no_refine", c.ablations.no_refine);
  ablations.read("single_step", c.ablations.single_step);
  ablations.reject_unknown();

  auto tools = root.child("tools");
  tools.read("code_interpreter", c.tools.code_interpreter);
  tools.reject_unknown();

  root.reject_unknown();
  c.validate();
  return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Config, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::Config, path.string() + " is not valid JSON");
  return config_from_json(j);
}

}  // namespace halo
