#pragma once

// One query end to end: refine, reason, aggregate, and record a trace.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "halo/config.hpp"
#include "halo/gateway.hpp"
#include "halo/reasoning.hpp"
#include "halo/refinery.hpp"
#include "halo/trace.hpp"

namespace halo {

struct RunIdentity {
  std::string run_id = new_run_id();
  std::string created_at = utc_timestamp();
};

struct RunArtifacts {
  RunOutcome outcome;
  nlohmann::json trace;
};

namespace detail {

inline nlohmann::json build_trace(const RunIdentity& identity, const EngineConfig& config, const std::string& query,
                                  const std::optional<QueryBundle>& bundle, const RunLog& log, const Gateway& gateway) {
  nlohmann::json trace;
  trace["schema_version"] = kTraceSchemaVersion;
  trace["run_id"] = identity.run_id;
  trace["created_at"] = identity.created_at;
  trace["config"] = to_json(config);
  trace["query"] = query;
  trace["query_bundle"] = bundle ? nlohmann::json(*bundle) : nlohmann::json(nullptr);
  trace["subtasks"] = log.subtasks;
  trace["backprop_log"] = log.backprops;
  trace["gateway_calls"] = recording_to_json(gateway.calls());
  trace["events"] = log.events;
  return trace;
}

}  // namespace detail

/// Runs one query. With a trace path the trace is written even when the run fails,
/// carrying an `error` field in place of the outcome.
inline RunArtifacts run_query(const EngineConfig& config, const std::string& query,
                              std::shared_ptr<ChatBackend> backend,
                              const std::optional<std::filesystem::path>& trace_path = std::nullopt,
                              RunIdentity identity = {}, ReasoningStack::EventCallback on_event = {}) {
  config.validate();
  Gateway gateway(std::move(backend));
  RunLog log;
  std::optional<QueryBundle> bundle;
  auto persist = [&](nlohmann::json trace) {
    if (trace_path) write_trace(*trace_path, trace);
    return trace;
  };
  try {
    if (config.ablations.no_refine) {
      bundle = unrefined_bundle(query);
    } else {
      PromptRefinery refinery(gateway, RefineryOptions{config.decoding(), config.task_kind,
                                                       config.tools.code_interpreter});
      bundle = refinery.refine(query);
    }
    ReasoningOptions options;
    options.decoding = config.decoding();
    options.task_kind = config.task_kind;
    options.search = config.search_options();
    options.single_step = config.ablations.single_step;
    options.rng_seed = static_cast<std::uint64_t>(config.seed);
    ReasoningStack stack(gateway, options, &log, std::move(on_event));
    RunOutcome outcome = stack.run(*bundle, config.budgets);
    outcome.trace_ref = identity.run_id;
    auto trace = detail::build_trace(identity, config, query, bundle, log, gateway);
    trace["outcome"] = outcome;
    return {std::move(outcome), persist(std::move(trace))};
  } catch (const Error& e) {
    auto trace = detail::build_trace(identity, config, query, bundle, log, gateway);
    trace["outcome"] = nullptr;
    trace["error"] = {{"code", static_cast<int>(e.code())}, {"message", e.what()}};
    try {
      persist(std::move(trace));
    } catch (const Error&) {
    }
    throw;
  }
}

namespace detail {

inline void compare_backprops(const nlohmann::json& recorded, const std::vector<BackpropRecord>& replayed) {
  const auto n = std::min(recorded.size(), replayed.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (nlohmann::json(replayed[i]) != recorded[i]) {
      throw DivergenceError("backprop log", i, "recorded " + recorded[i].dump() + ", replayed " +
                                                   nlohmann::json(replayed[i]).dump());
    }
  }
}

}  // namespace detail

/// Re-executes a recorded run against its own gateway log and checks every
/// backpropagation step and the outcome match. Throws DivergenceError naming the
/// first differing record.
inline RunOutcome replay_trace(const nlohmann::json& trace) {
  EngineConfig config;
  try {
    config = config_from_json(trace.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::TraceParse, std::string("trace has no usable config: ") + e.what());
  }
  if (!trace.contains("query") || !trace.contains("gateway_calls") || !trace.contains("backprop_log")) {
    throw Error(Errc::TraceParse, "trace lacks query, gateway_calls or backprop_log");
  }
  const auto& recorded_backprops = trace.at("backprop_log");
  auto backend = std::make_shared<ReplayBackend>(recording_from_json(trace.at("gateway_calls")));

  Gateway gateway(backend);
  RunLog log;
  std::optional<RunOutcome> outcome;
  std::optional<DivergenceError> gateway_divergence;
  std::optional<Error> run_error;
  try {
    QueryBundle bundle;
    const auto query = trace.at("query").get<std::string>();
    if (config.ablations.no_refine) {
      bundle = unrefined_bundle(query);
    } else {
      PromptRefinery refinery(gateway, RefineryOptions{config.decoding(), config.task_kind,
                                                       config.tools.code_interpreter});
      bundle = refinery.refine(query);
    }
    ReasoningOptions options;
    options.decoding = config.decoding();
    options.task_kind = config.task_kind;
    options.search = config.search_options();
    options.single_step = config.ablations.single_step;
    options.rng_seed = static_cast<std::uint64_t>(config.seed);
    ReasoningStack stack(gateway, options, &log);
    outcome = stack.run(bundle, config.budgets);
    outcome->trace_ref = trace.value("run_id", std::string{});
  } catch (const DivergenceError& e) {
    gateway_divergence = e;
  } catch (const Error& e) {
    run_error = e;
  }

  // A backprop mismatch precedes any request mismatch it causes, so report it first.
  detail::compare_backprops(recorded_backprops, log.backprops);
  if (gateway_divergence) throw *gateway_divergence;

  const bool recorded_failed = trace.contains("error") && !trace["error"].is_null();
  if (run_error) {
    if (recorded_failed) throw *run_error;
    throw DivergenceError("outcome", 0, std::string("replay failed where the recording succeeded: ") + run_error->what());
  }
  if (recorded_failed) throw DivergenceError("outcome", 0, "replay succeeded where the recording failed");
  if (log.backprops.size() != recorded_backprops.size()) {
    throw DivergenceError("backprop log", std::min(log.backprops.size(), recorded_backprops.size()),
                          "recorded " + std::to_string(recorded_backprops.size()) + " records, replayed " +
                              std::to_string(log.backprops.size()));
  }
  if (backend->consumed() != backend->size()) {
    throw DivergenceError("gateway calls", backend->consumed(), "recorded calls left unused");
  }
  const auto& recorded_outcome = trace.at("outcome");
  const nlohmann::json replayed = *outcome;
  for (const char* field : {"final_answer", "history", "stop_reason"}) {
    if (recorded_outcome.at(field) != replayed.at(field)) {
      throw DivergenceError("outcome", 0, std::string("field '") + field + "' differs");
    }
  }
  return *outcome;
}

inline RunOutcome replay_trace_file(const std::filesystem::path& path) { return replay_trace(read_trace(path)); }

}  // namespace halo
