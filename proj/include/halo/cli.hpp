#pragma once

// `halo` command line: run, bench, trace show, trace replay.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "halo/config.hpp"
#include "halo/datasets.hpp"
#include "halo/engine.hpp"
#include "halo/harness.hpp"
#include "halo/live_backend.hpp"
#include "halo/sampling.hpp"
#include "halo/shim_client.hpp"
#include "halo/trace.hpp"

namespace halo::cli {

enum ExitCode : int { kOk = 0, kEngineError = 1, kConfigError = 2, kDivergence = 3 };

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::Config: return kConfigError;
    case Errc::ReplayDivergence: return kDivergence;
    default: return kEngineError;
  }
}

/// Config overrides given on the command line, keyed by JSON path ("budgets.max_subtasks").
class ConfigFlags {
 public:
  void attach(CLI::App& app) {
    add_text(app, "--model-name", "model_name");
    add_text(app, "--base-url", "base_url");
    add_number(app, "--temperature", "temperature");
    add_integer(app, "--max-tokens", "max_tokens");
    add_integer(app, "--seed", "seed");
    add_number(app, "--alpha", "alpha");
    add_number(app, "--lambda-success", "lambda_success");
    add_number(app, "--lambda-fail", "lambda_fail");
    add_number(app, "--lambda-continue", "lambda_continue");
    add_text(app, "--task-kind", "task_kind");
    add_integer(app, "--budgets.max-subtasks", "budgets.max_subtasks");
    add_integer(app, "--budgets.mcts-iterations", "budgets.mcts_iterations");
    add_integer(app, "--budgets.simulation-depth", "budgets.simulation_depth");
    add_integer(app, "--budgets.max-roles-per-subtask", "budgets.max_roles_per_subtask");
    add_flag(app, "--ablations.no-refine", "ablations.no_refine");
    add_flag(app, "--ablations.single-step", "ablations.single_step");
    add_flag(app, "--tools.code-interpreter", "tools.code_interpreter");
    app.add_option("--config", config_path_, "Engine configuration JSON file");
  }

  /// File (or defaults) first, then every flag that was given.
  EngineConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw Error(Errc::Config, "cannot open config file " + config_path_);
      std::stringstream ss;
      ss << in.rdbuf();
      j = nlohmann::json::parse(ss.str(), nullptr, false);
      if (j.is_discarded()) throw Error(Errc::Config, config_path_ + " is not valid JSON");
    }
    for (const auto& apply : setters_) apply(j);
    return config_from_json(j);
  }

 private:
  static nlohmann::json& slot(nlohmann::json& root, const std::string& dotted) {
    nlohmann::json* cur = &root;
    std::size_t start = 0;
    for (auto dot = dotted.find('.'); dot != std::string::npos; dot = dotted.find('.', start)) {
      cur = &(*cur)[dotted.substr(start, dot - start)];
      start = dot + 1;
    }
    return (*cur)[dotted.substr(start)];
  }

  template <class T>
  void add_value(CLI::App& app, const std::string& flag, const std::string& key, const std::string& desc) {
    auto value = std::make_shared<T>();
    auto* opt = app.add_option(flag, *value, desc);
    setters_.push_back([opt, value, key](nlohmann::json& j) {
      if (opt->count() > 0) slot(j, key) = *value;
    });
  }
  void add_text(CLI::App& app, const std::string& flag, const std::string& key) {
    add_value<std::string>(app, flag, key, "Override " + key);
  }
  void add_number(CLI::App& app, const std::string& flag, const std::string& key) {
    add_value<double>(app, flag, key, "Override " + key);
  }
  void add_integer(CLI::App& app, const std::string& flag, const std::string& key) {
    add_value<long long>(app, flag, key, "Override " + key);
  }
  void add_flag(CLI::App& app, const std::string& flag, const std::string& key) {
    auto value = std::make_shared<bool>(false);
    auto* opt = app.add_flag(flag, *value, "Override " + key);
    setters_.push_back([opt, value, key](nlohmann::json& j) {
      if (opt->count() > 0) slot(j, key) = *value;
    });
  }

  std::string config_path_;
  std::vector<std::function<void(nlohmann::json&)>> setters_;
};

/// Backend factory: a scripted fixture when given (a fresh copy per call), else the live endpoint.
inline std::function<std::shared_ptr<ChatBackend>()> backend_factory(const EngineConfig& config,
                                                                     const std::string& fixture_path) {
  if (!fixture_path.empty()) {
    std::ifstream in(fixture_path);
    if (!in) throw Error(Errc::Config, "cannot open scripted fixture " + fixture_path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = nlohmann::json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::Config, fixture_path + " is not valid JSON");
    auto script = ScriptedBackend::parse_fixture(j.contains("script") ? j["script"] : j);
    return [script] { return std::make_shared<ScriptedBackend>(script); };
  }
  const char* key = std::getenv(kApiKeyEnv);
  if (!key || !*key) {
    throw Error(Errc::Config, std::string(kApiKeyEnv) + " is not set (or pass --scripted for an offline run)");
  }
  LiveBackendConfig live{config.base_url, config.model_name, key, {}, std::chrono::seconds(120)};
  return [live] { return std::make_shared<LiveBackend>(live); };
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Config, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string summarize_trace(const nlohmann::json& trace) {
  std::ostringstream out;
  out << "run " << trace.value("run_id", std::string("?")) << "  created " << trace.value("created_at", std::string("?"))
      << "  schema " << trace.value("schema_version", std::string("?")) << "\n";
  if (trace.contains("config")) {
    const auto& c = trace["config"];
    out << "model " << c.value("model_name", std::string("?")) << "  task " << c.value("task_kind", std::string("?"))
        << "  alpha " << c.value("alpha", 0.0) << "\n";
  }
  if (trace.contains("query")) out << "query: " << trace["query"].get<std::string>() << "\n";
  std::map<std::string, int> per_key;
  if (trace.contains("gateway_calls")) {
    for (const auto& call : trace["gateway_calls"]) ++per_key[call.value("routing_key", std::string("?"))];
    out << "gateway calls: " << trace["gateway_calls"].size();
    for (const auto& [key, n] : per_key) out << "  " << key << "=" << n;
    out << "\n";
  }
  if (trace.contains("subtasks")) {
    for (const auto& s : trace["subtasks"]) {
      const auto& best = s["best_trajectory"];
      auto answer = best.value("answer", std::string{});
      for (auto& ch : answer) if (ch == '\n') ch = ' ';
      if (answer.size() > 60) answer = answer.substr(0, 57) + "...";
      out << "  subtask " << s["subtask"].value("index", 0) << ": " << s["subtask"].value("description", std::string{})
          << "\n    roles " << s["roles"].size() << ", tree nodes " << s["tree"]["nodes"].size() << ", best "
          << best.value("terminal_label", std::string("?")) << " " << best.value("mean_value", 0.0) << ": " << answer
          << "\n";
    }
  }
  if (trace.contains("backprop_log")) out << "backprop records: " << trace["backprop_log"].size() << "\n";
  if (trace.contains("outcome") && trace["outcome"].is_object()) {
    const auto& o = trace["outcome"];
    out << "stop: " << o.value("stop_reason", std::string("?")) << "\nfinal answer: "
        << o.value("final_answer", std::string{}) << "\n";
  }
  if (trace.contains("error") && trace["error"].is_object()) {
    out << "error: " << trace["error"].value("message", std::string{}) << "\n";
  }
  return out.str();
}

struct BenchArgs {
  std::string kind;
  std::string dataset;
  double fraction = 0.0;
  std::size_t count = 0;
  std::uint64_t sample_seed = 10;
  std::string report;
  int parallelism = 4;
  std::string trace_dir;
  std::string shim;
  double timeout_s = 10.0;
};

inline int run_bench_command(const EngineConfig& base, const BenchArgs& args,
                             const std::function<std::shared_ptr<ChatBackend>()>& make_backend, std::ostream& out) {
  const TaskKind kind = [&] {
    try {
      return parse_task_kind(args.kind);
    } catch (const Error&) {
      throw Error(Errc::Config, "'--kind' must be code, choice or math");
    }
  }();
  std::vector<BenchmarkItem> items = kind == TaskKind::Code     ? load_code_benchmark(args.dataset)
                                     : kind == TaskKind::Choice ? load_choice_benchmark(args.dataset)
                                                                : load_math_benchmark(args.dataset);
  if (args.fraction > 0.0 || args.count > 0) {
    auto spec = args.count > 0 ? SampleSpec::count(args.count) : SampleSpec::fraction(args.fraction);
    items = stratified_sample(std::span<const BenchmarkItem>(items), spec, args.sample_seed,
                              [](const BenchmarkItem& i) { return i.stratum; });
  }
  EngineConfig config = base;
  config.task_kind = kind;
  if (!args.trace_dir.empty()) std::filesystem::create_directories(args.trace_dir);
  const auto shim_argv = args.shim.empty() ? default_shim_command() : split_command(args.shim);

  auto solve = [&](const BenchmarkItem& item) {
    std::optional<std::filesystem::path> trace_path;
    if (!args.trace_dir.empty()) {
      std::string stem = item.id;
      for (auto& c : stem) if (c == '/' || c == '\\' || c == ' ') c = '_';
      trace_path = std::filesystem::path(args.trace_dir) / (stem + kTraceExtension);
    }
    auto artifacts = run_query(config, item.prompt, make_backend(), trace_path);
    return answer_for_grading(kind, artifacts.outcome.final_answer);
  };
  auto grade = [&](const BenchmarkItem& item, const std::string& predicted) {
    switch (item.kind) {
      case TaskKind::Choice: return grade_choice(predicted, item.reference);
      case TaskKind::Math: return grade_math(predicted, item.reference);
      case TaskKind::Code: {
        ShimClient shim(shim_argv);
        return grade_code(shim, predicted, item.reference, item.entry_point, args.timeout_s) == CodeVerdict::Pass;
      }
    }
    return false;
  };
  auto report = run_bench(items, solve, grade, BenchOptions{args.parallelism});
  if (!args.report.empty()) {
    write_file_atomic(args.report, to_json(report).dump(2) + "\n");
  }
  out << render_table(report);
  return kOk;
}

/// Runs the command line; returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Hierarchical multi-agent reasoning engine"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Answer one query");
  ConfigFlags run_flags;
  run_flags.attach(*run);
  std::string query;
  std::string query_file;
  std::string run_fixture;
  std::string trace_path;
  bool run_json = false;
  bool quiet = false;
  run->add_option("query", query, "Query text");
  run->add_option("--query-file", query_file, "Read the query from a file");
  run->add_option("--scripted", run_fixture, "Scripted reply fixture (offline backend)");
  run->add_option("--trace", trace_path, "Trace output path (default <run_id>.halo.json.gz)");
  run->add_flag("--json", run_json, "Print the outcome as JSON");
  run->add_flag("--quiet", quiet, "No progress lines on stderr");

  // bench
  auto* bench = app.add_subcommand("bench", "Evaluate on a benchmark dataset");
  ConfigFlags bench_flags;
  bench_flags.attach(*bench);
  BenchArgs bench_args;
  std::string bench_fixture;
  bench->add_option("--kind", bench_args.kind, "Dataset kind: code, choice or math")->required();
  bench->add_option("--dataset", bench_args.dataset, "Dataset file (code) or directory")->required();
  auto* frac = bench->add_option("--sample-fraction", bench_args.fraction, "Stratified sample fraction in (0, 1]");
  auto* cnt = bench->add_option("--sample-count", bench_args.count, "Stratified sample size");
  frac->excludes(cnt);
  bench->add_option("--sample-seed", bench_args.sample_seed, "Sampling seed");
  bench->add_option("--report", bench_args.report, "Report JSON output path");
  bench->add_option("--parallelism", bench_args.parallelism, "Items evaluated at once")->check(CLI::PositiveNumber);
  bench->add_option("--trace-dir", bench_args.trace_dir, "Write one trace per item here");
  bench->add_option("--shim", bench_args.shim, "Code execution shim command");
  bench->add_option("--exec-timeout", bench_args.timeout_s, "Per-item code execution timeout in seconds");
  bench->add_option("--scripted", bench_fixture, "Scripted reply fixture (offline backend)");

  // trace
  auto* trace = app.add_subcommand("trace", "Inspect or replay traces");
  trace->require_subcommand(1);
  std::string show_path;
  bool show_json = false;
  auto* show = trace->add_subcommand("show", "Summarize a trace");
  show->add_option("path", show_path, "Trace file")->required();
  show->add_flag("--json", show_json, "Print the whole trace as JSON");
  std::string replay_path;
  auto* replay = trace->add_subcommand("replay", "Re-run a trace against its recorded calls");
  replay->add_option("path", replay_path, "Trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*run) {
      EngineConfig config = run_flags.resolve();
      if (!query_file.empty()) query = read_text(query_file);
      if (text::trim(query).empty()) throw Error(Errc::Config, "no query given");
      auto make_backend = backend_factory(config, run_fixture);
      RunIdentity identity;
      std::filesystem::path path = trace_path.empty() ? identity.run_id + kTraceExtension : trace_path;
      auto on_event = [&](const nlohmann::json& e) {
        if (!quiet) err << "[halo] " << e.dump() << "\n";
      };
      auto artifacts = run_query(config, query, make_backend(), path, identity, on_event);
      if (run_json) {
        out << nlohmann::json(artifacts.outcome).dump(2) << "\n";
      } else {
        out << artifacts.outcome.final_answer << "\n";
      }
      if (!quiet) err << "[halo] trace written to " << path.string() << "\n";
      return kOk;
    }
    if (*bench) {
      EngineConfig config = bench_flags.resolve();
      return run_bench_command(config, bench_args, backend_factory(config, bench_fixture), out);
    }
    if (*show) {
      auto t = read_trace(show_path);
      out << (show_json ? t.dump(2) + "\n" : summarize_trace(t));
      return kOk;
    }
    if (*replay) {
      auto outcome = replay_trace_file(replay_path);
      out << "replay matches recording (" << to_string(outcome.stop_reason) << ", " << outcome.history.size()
          << " subtasks)\n"
          << outcome.final_answer << "\n";
      return kOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kEngineError;
  }
  return kEngineError;
}

}  // namespace halo::cli
