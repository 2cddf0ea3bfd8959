#include <sstream>

#include <gtest/gtest.h>

#include "halo/cli.hpp"
#include "test_support.hpp"

using namespace halo;
using namespace halo::testing;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "halo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string fixture_path(const std::string& name) { return (test_dir() / "fixtures" / (name + ".json")).string(); }

}  // namespace

TEST(Cli, RunWritesTraceAndReplayMatches) {
  TempDir dir;
  const auto trace = (dir / "t.halo.json.gz").string();
  auto run = invoke({"run", "What is 12 times 7?", "--scripted", fixture_path("planner_stop"), "--task-kind", "math",
                     "--budgets.mcts-iterations", "3", "--budgets.simulation-depth", "2",
                     "--budgets.max-roles-per-subtask", "2", "--trace", trace});
  ASSERT_EQ(run.code, 0) << run.err;
  EXPECT_EQ(run.out, "\\boxed{84}\n");
  EXPECT_NE(run.err.find("[halo]"), std::string::npos);

  auto replay = invoke({"trace", "replay", trace});
  EXPECT_EQ(replay.code, 0) << replay.err;
  EXPECT_NE(replay.out.find("replay matches"), std::string::npos);

  auto show = invoke({"trace", "show", trace});
  EXPECT_EQ(show.code, 0);
  EXPECT_NE(show.out.find("stop: PlannerStop"), std::string::npos) << show.out;
  EXPECT_NE(show.out.find("query: What is 12 times 7?"), std::string::npos);

  auto json = invoke({"trace", "show", trace, "--json"});
  EXPECT_EQ(nlohmann::json::parse(json.out)["schema_version"], kTraceSchemaVersion);
}

TEST(Cli, QuietJsonOutputFromConfigFile) {
  TempDir dir;
  write_text(dir / "config.json", fixture("planner_stop")["config"].dump());
  auto run = invoke({"run", "What is 12 times 7?", "--config", (dir / "config.json").string(), "--scripted",
                     fixture_path("planner_stop"), "--trace", (dir / "t.gz").string(), "--json", "--quiet"});
  ASSERT_EQ(run.code, 0) << run.err;
  EXPECT_TRUE(run.err.empty());
  auto outcome = nlohmann::json::parse(run.out);
  EXPECT_EQ(outcome["stop_reason"], "PlannerStop");
  EXPECT_EQ(outcome["final_answer"], "\\boxed{84}");
}

TEST(Cli, ConfigProblemsExitWithTwo) {
  EXPECT_EQ(invoke({"run", "q", "--temperature", "-1", "--scripted", fixture_path("planner_stop")}).code, 2);
  EXPECT_EQ(invoke({"run", "q", "--no-such-flag"}).code, 2);
  EXPECT_EQ(invoke({"run", "   ", "--scripted", fixture_path("planner_stop")}).code, 2);
  TempDir dir;
  write_text(dir / "c.json", R"({"budgets": {"max_subtask": 3}})");
  auto bad = invoke({"run", "q", "--config", (dir / "c.json").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("budgets.max_subtask"), std::string::npos) << bad.err;
}

TEST(Cli, MissingApiKeyIsConfigError) {
  ::unsetenv(kApiKeyEnv);
  auto r = invoke({"run", "q"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(kApiKeyEnv), std::string::npos) << r.err;
}

TEST(Cli, EngineFailureExitsWithOne) {
  TempDir dir;
  auto script = fixture("planner_stop")["script"];
  script.erase("planner");
  write_text(dir / "s.json", script.dump());
  auto r = invoke({"run", "q", "--scripted", (dir / "s.json").string(), "--trace", (dir / "t.gz").string(),
                   "--quiet"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "t.gz"));
}

TEST(Cli, DivergentTraceExitsWithThree) {
  TempDir dir;
  const auto path = dir / "t.halo.json.gz";
  auto f = fixture("planner_stop");
  run_query(config_from_json(f["config"]), f["query"], scripted(f["script"]), path);
  auto trace = read_trace(path);
  trace["config"]["lambda_continue"] = 0.5;
  trace["config"]["lambda_success"] = 1.5;
  trace["config"]["lambda_fail"] = -0.5;
  write_trace(path, trace);
  auto r = invoke({"trace", "replay", path.string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("backprop"), std::string::npos) << r.err;
}

TEST(Cli, UnreadableTraceExitsWithOne) {
  TempDir dir;
  write_text(dir / "bad.gz", "not a trace");
  EXPECT_EQ(invoke({"trace", "show", (dir / "bad.gz").string()}).code, 1);
  EXPECT_EQ(invoke({"trace", "replay", (dir / "missing.gz").string()}).code, 1);
}

TEST(Cli, BenchScoresMathDatasetOffline) {
  TempDir dir;
  write_text(dir / "math" / "a" / "1.json",
             R"({"problem":"What is 12 times 7?","solution":"\\boxed{84}","level":"Level 1","type":"Prealgebra"})");
  write_text(dir / "math" / "a" / "2.json",
             R"({"problem":"What is 12 times 8?","solution":"\\boxed{96}","level":"Level 1","type":"Prealgebra"})");
  const auto report = dir / "report.json";
  auto r = invoke({"bench", "--kind", "math", "--dataset", (dir / "math").string(), "--scripted",
                   fixture_path("planner_stop"), "--budgets.mcts-iterations", "3", "--budgets.simulation-depth", "2",
                   "--budgets.max-roles-per-subtask", "2", "--report", report.string(), "--trace-dir",
                   (dir / "traces").string(), "--parallelism", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("overall"), std::string::npos);
  auto j = load_json(report);
  EXPECT_EQ(j["metric_name"], "accuracy");
  EXPECT_DOUBLE_EQ(j["metric_value"].get<double>(), 50.0);
  EXPECT_EQ(j["per_item"].size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "traces" / "a_1.json.halo.json.gz"));

  EXPECT_EQ(invoke({"bench", "--kind", "poetry", "--dataset", (dir / "math").string(), "--scripted",
                    fixture_path("planner_stop")})
                .code,
            2);
}

TEST(Cli, HelpExitsZero) {
  auto r = invoke({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("run"), std::string::npos);
}
