#pragma once

// Outer loop: plan one subtask at a time from the execution history, design
// roles for it, search over those roles, and stop on a planner `stop`, on
// answer consensus, or when the subtask budget runs out.

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "halo/agents.hpp"
#include "halo/core.hpp"
#include "halo/gateway.hpp"
#include "halo/prompt_assets.hpp"
#include "halo/refinery.hpp"
#include "halo/search.hpp"

namespace halo {

struct RunBudget {
  int max_subtasks = 6;
  int mcts_iterations = 8;
  int simulation_depth = 3;
  int max_roles_per_subtask = 4;

  void validate() const {
    auto check = [](int v, const char* name) {
      if (v < 1) throw Error(Errc::Validation, std::string(name) + " must be >= 1");
    };
    check(max_subtasks, "max_subtasks");
    check(mcts_iterations, "mcts_iterations");
    check(simulation_depth, "simulation_depth");
    check(max_roles_per_subtask, "max_roles_per_subtask");
  }

  bool operator==(const RunBudget&) const = default;
};

enum class StopReason { PlannerStop, EarlyConsensus, BudgetExhausted };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::PlannerStop: return "PlannerStop";
    case StopReason::EarlyConsensus: return "EarlyConsensus";
    case StopReason::BudgetExhausted: return "BudgetExhausted";
  }
  return "BudgetExhausted";
}

inline StopReason parse_stop_reason(std::string_view s) {
  if (s == "PlannerStop") return StopReason::PlannerStop;
  if (s == "EarlyConsensus") return StopReason::EarlyConsensus;
  if (s == "BudgetExhausted") return StopReason::BudgetExhausted;
  throw Error(Errc::Validation, "unknown stop reason '" + std::string(s) + "'");
}

struct RunOutcome {
  std::string final_answer;
  ExecutionHistory history;
  StopReason stop_reason = StopReason::BudgetExhausted;
  std::string trace_ref;

  bool operator==(const RunOutcome&) const = default;
};

// ---------------------------------------------------------------------------
// Consensus and aggregation

/// Consensus needs at least two completed subtasks, and the largest class of
/// normalize-equal answers must cover at least 66% of them.
inline bool should_stop_early(const ExecutionHistory& history, TaskKind kind) {
  const auto n = history.size();
  if (n < 2) return false;
  std::map<std::string, std::size_t> classes;
  std::size_t largest = 0;
  for (const auto& e : history.entries()) largest = std::max(largest, ++classes[normalize_answer(e.answer, kind)]);
  return largest * 100 >= 66 * n;
}

/// Majority vote over normalized answers; ties by summed best_score, then by
/// earliest subtask. Returns the raw text of the winning class's best entry.
inline std::string aggregate_final(const ExecutionHistory& history, TaskKind kind) {
  if (history.empty()) throw Error(Errc::NoAnswer, "cannot aggregate an empty history");
  struct Class {
    std::size_t count = 0;
    double score_sum = 0.0;
    int earliest = 0;
    const HistoryEntry* best = nullptr;
  };
  std::map<std::string, Class> classes;
  for (const auto& e : history.entries()) {
    auto& c = classes[normalize_answer(e.answer, kind)];
    if (c.count == 0) c.earliest = e.subtask.index;
    ++c.count;
    c.score_sum += e.best_score;
    if (!c.best || e.best_score > c.best->best_score) c.best = &e;
  }
  const Class* winner = nullptr;
  for (const auto& [key, c] : classes) {
    if (!winner || c.count > winner->count ||
        (c.count == winner->count &&
         (c.score_sum > winner->score_sum || (c.score_sum == winner->score_sum && c.earliest < winner->earliest)))) {
      winner = &c;
    }
  }
  return winner->best->answer;
}

/// Numbered "subtask -> answer" lines, dropping the oldest when over `cap` characters.
inline std::string render_history(const ExecutionHistory& history, std::size_t cap = 2000) {
  if (history.empty()) return "(none)";
  auto flat = [](std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
  };
  std::vector<std::string> lines;
  for (const auto& e : history.entries()) {
    lines.push_back(std::to_string(e.subtask.index) + ". " + flat(e.subtask.description) + " -> " + flat(e.answer));
  }
  std::string out;
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string candidate = out.empty() ? *it : *it + "\n" + out;
    if (candidate.size() > cap) {
      if (out.empty()) out = it->substr(it->size() - cap);
      break;
    }
    out = std::move(candidate);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ReasoningOptions {
  Decoding decoding;
  TaskKind task_kind = TaskKind::Math;
  SearchOptions search;
  bool single_step = false;
  std::uint64_t rng_seed = 10;
};

struct SubtaskRecord {
  Subtask subtask;
  std::vector<RoleSpec> roles;
  json tree;
  Trajectory best;
  int skipped_expansions = 0;
};

/// Everything the loop produced besides the outcome; filled as the run progresses.
struct RunLog {
  std::vector<SubtaskRecord> subtasks;
  std::vector<BackpropRecord> backprops;
  std::vector<json> events;
};

class ReasoningStack {
 public:
  using EventCallback = std::function<void(const json&)>;

  ReasoningStack(Gateway& gateway, ReasoningOptions options, RunLog* log = nullptr, EventCallback on_event = {})
      : gateway_(gateway), options_(std::move(options)), log_(log), on_event_(std::move(on_event)) {}

  Subtask plan_next_subtask(const QueryBundle& bundle, const ExecutionHistory& history, const RunBudget& budget) {
    if (static_cast<int>(history.size()) >= budget.max_subtasks) {
      throw Error(Errc::Validation, "subtask budget already spent");
    }
    const int next = static_cast<int>(history.size()) + 1;
    std::string message = "Task prompt:\n" + bundle.prompt() + "\n\n" + representation_block(bundle.representation) +
                          "\n\nExecuted subtasks:\n" + render_history(history);
    auto request = options_.decoding.request(std::string(routing::planner), std::string(prompts::planner), {message});
    return ask_structured(
        gateway_, request,
        [next](const std::string& reply) {
          auto t = text::trim(reply);
          auto token = text::lower(t);
          while (!token.empty() && std::string_view(".`'\"").find(token.back()) != std::string_view::npos) token.pop_back();
          while (!token.empty() && std::string_view("`'\"").find(token.front()) != std::string_view::npos) token.erase(0, 1);
          if (token == "stop") return Subtask::stop();
          if (t.empty()) throw malformed("planner reply is neither 'stop' nor a subtask description");
          return Subtask{next, t, false};
        },
        "Reply with the next subtask description, or the single word stop.");
  }

  std::vector<RoleSpec> design_roles(const Subtask& subtask, const QueryBundle& bundle, const RunBudget& budget) {
    if (subtask.is_stop) throw Error(Errc::Validation, "cannot design roles for the stop sentinel");
    auto request = options_.decoding.request(std::string(routing::role_designer), std::string(prompts::role_designer),
                                             {subtask_context(subtask, bundle)});
    auto roles = ask_structured(gateway_, request, parse_roles,
                                "Reply with a non-empty JSON array of role objects only.");
    if (static_cast<int>(roles.size()) > budget.max_roles_per_subtask) roles.resize(budget.max_roles_per_subtask);
    for (std::size_t i = 0; i < roles.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (roles[i].role_name == roles[j].role_name) {
          throw Error(Errc::Validation, "duplicate role_name '" + roles[i].role_name + "'");
        }
      }
    }
    return roles;
  }

  RunOutcome run(const QueryBundle& bundle, const RunBudget& budget) {
    budget.validate();
    SearchOptions search_options = options_.search;
    search_options.iterations = budget.mcts_iterations;
    search_options.simulation_depth = budget.simulation_depth;
    GatewayAgents agents(gateway_, options_.decoding);

    RunOutcome outcome;
    outcome.stop_reason = StopReason::BudgetExhausted;
    for (int k = 1; k <= budget.max_subtasks; ++k) {
      Subtask subtask = options_.single_step ? Subtask{1, bundle.prompt(), false}
                                             : plan_next_subtask(bundle, outcome.history, budget);
      if (subtask.is_stop) {
        outcome.stop_reason = StopReason::PlannerStop;
        emit({{"event", "planner_stop"}, {"after_subtasks", outcome.history.size()}});
        break;
      }
      emit({{"event", "subtask_started"}, {"index", subtask.index}, {"description", subtask.description}});
      auto roles = design_roles(subtask, bundle, budget);
      auto result = search(subtask, roles, bundle, search_options, agents, options_.rng_seed + subtask.index - 1,
                           log_ ? &log_->backprops : nullptr);
      const double score = std::clamp(result.best.mean_value, 0.0, 1.0);
      outcome.history.append(HistoryEntry{subtask, result.best.answer, score});
      if (log_) {
        log_->subtasks.push_back(
            SubtaskRecord{subtask, roles, tree_snapshot(result.tree), result.best, result.skipped_expansions});
      }
      emit({{"event", "subtask_finished"},
            {"index", subtask.index},
            {"answer", result.best.answer},
            {"best_score", score},
            {"terminal_label", result.best.terminal_label}});
      if (should_stop_early(outcome.history, options_.task_kind)) {
        outcome.stop_reason = StopReason::EarlyConsensus;
        emit({{"event", "early_stop"}, {"after_subtasks", outcome.history.size()}});
        break;
      }
      if (options_.single_step) break;
    }
    if (outcome.history.empty()) throw Error(Errc::NoAnswer, "planner stopped before any subtask completed");
    outcome.final_answer = aggregate_final(outcome.history, options_.task_kind);
    return outcome;
  }

 private:
  void emit(json event) {
    if (on_event_) on_event_(event);
    if (log_) log_->events.push_back(std::move(event));
  }

  Gateway& gateway_;
  ReasoningOptions options_;
  RunLog* log_;
  EventCallback on_event_;
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const RunBudget& b) {
  j = json{{"max_subtasks", b.max_subtasks},
           {"mcts_iterations", b.mcts_iterations},
           {"simulation_depth", b.simulation_depth},
           {"max_roles_per_subtask", b.max_roles_per_subtask}};
}

inline void to_json(json& j, StopReason r) { j = std::string(to_string(r)); }
inline void from_json(const json& j, StopReason& r) { r = parse_stop_reason(j.get<std::string>()); }

inline void to_json(json& j, const RunOutcome& o) {
  j = json{{"final_answer", o.final_answer},
           {"history", o.history},
           {"stop_reason", o.stop_reason},
           {"trace_ref", o.trace_ref}};
}
inline void from_json(const json& j, RunOutcome& o) {
  j.at("final_answer").get_to(o.final_answer);
  j.at("history").get_to(o.history);
  j.at("stop_reason").get_to(o.stop_reason);
  j.at("trace_ref").get_to(o.trace_ref);
}

inline void to_json(json& j, const SubtaskRecord& r) {
  j = json{{"subtask", r.subtask},
           {"roles", r.roles},
           {"tree", r.tree},
           {"best_trajectory", r.best},
           {"skipped_expansions", r.skipped_expansions}};
}

}  // namespace halo
