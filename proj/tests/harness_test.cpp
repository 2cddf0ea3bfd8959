#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "halo/harness.hpp"
#include "halo/sampling.hpp"
#include "halo/shim_client.hpp"
#include "test_support.hpp"

using namespace halo;
using halo::testing::TempDir;
using halo::testing::write_text;

namespace {

std::vector<BenchmarkItem> population(const std::vector<std::pair<std::string, std::size_t>>& strata, TaskKind kind) {
  std::vector<BenchmarkItem> items;
  for (const auto& [name, size] : strata) {
    for (std::size_t i = 0; i < size; ++i) {
      items.push_back(BenchmarkItem{name + "#" + std::to_string(i), kind, "p", "a", name, ""});
    }
  }
  return items;
}

std::vector<BenchmarkItem> sample(const std::vector<BenchmarkItem>& items, const SampleSpec& spec, std::uint64_t seed) {
  return stratified_sample(std::span<const BenchmarkItem>(items), spec, seed, &BenchmarkItem::stratum);
}

/// 57 subjects of uneven size totalling 15,908.
std::vector<std::pair<std::string, std::size_t>> subject_sizes() {
  std::vector<std::pair<std::string, std::size_t>> out;
  std::size_t total = 0;
  for (int i = 0; i < 56; ++i) {
    std::size_t n = 100 + static_cast<std::size_t>((i * 37) % 300);
    out.emplace_back("subject" + std::to_string(i), n);
    total += n;
  }
  out.emplace_back("subject56", 15908 - total);
  return out;
}

/// 7 subareas x 5 levels totalling 12,500.
std::vector<std::pair<std::string, std::size_t>> math_sizes() {
  std::vector<std::pair<std::string, std::size_t>> out;
  std::size_t total = 0;
  for (int a = 0; a < 7; ++a) {
    for (int l = 1; l <= 5; ++l) {
      std::size_t n = 200 + static_cast<std::size_t>((a * 53 + l * 29) % 300);
      out.emplace_back("area" + std::to_string(a) + "/Level " + std::to_string(l), n);
      total += n;
    }
  }
  out.back().second += 12500 - total;
  return out;
}

std::map<std::string, std::size_t> count_by_stratum(const std::vector<BenchmarkItem>& items) {
  std::map<std::string, std::size_t> counts;
  for (const auto& i : items) ++counts[i.stratum];
  return counts;
}

ItemResult row(const std::string& id, bool correct, const std::string& stratum = "s") {
  return ItemResult{id, "x", correct, 0.0, stratum, ""};
}

}  // namespace

TEST(Sampling, ThirteenPercentOfSubjectsGives2068) {
  auto sizes = subject_sizes();
  auto items = population(sizes, TaskKind::Choice);
  ASSERT_EQ(items.size(), 15908u);
  auto s = sample(items, SampleSpec::fraction(0.13), 10);
  EXPECT_EQ(s.size(), 2068u);

  auto counts = count_by_stratum(s);
  for (const auto& [name, size] : sizes) {
    const double share = 2068.0 * static_cast<double>(size) / 15908.0;
    EXPECT_LE(std::abs(static_cast<double>(counts[name]) - share), 1.0) << name;
  }
}

TEST(Sampling, FiveHundredMathItemsStayWithinOneOfShare) {
  auto sizes = math_sizes();
  auto items = population(sizes, TaskKind::Math);
  ASSERT_EQ(items.size(), 12500u);
  for (std::uint64_t seed : {1u, 10u, 99u}) {
    auto s = sample(items, SampleSpec::count(500), seed);
    ASSERT_EQ(s.size(), 500u);
    auto counts = count_by_stratum(s);
    for (const auto& [name, size] : sizes) {
      const double share = 500.0 * static_cast<double>(size) / 12500.0;
      EXPECT_LT(std::abs(static_cast<double>(counts[name]) - share), 1.0) << name;
    }
    std::set<std::string> ids;
    for (const auto& i : s) ids.insert(i.id);
    EXPECT_EQ(ids.size(), 500u);
  }
}

TEST(Sampling, DeterministicUnderSeed) {
  auto items = population({{"only", 300}}, TaskKind::Math);
  auto a = sample(items, SampleSpec::count(40), 7);
  auto b = sample(items, SampleSpec::count(40), 7);
  auto c = sample(items, SampleSpec::count(40), 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.size(), 40u);
}

TEST(Sampling, RejectsBadSpecsAndEmptyInput) {
  EXPECT_THROW(SampleSpec::fraction(0.0), Error);
  EXPECT_THROW(SampleSpec::fraction(1.5), Error);
  EXPECT_THROW(SampleSpec::count(0), Error);
  std::vector<BenchmarkItem> none;
  EXPECT_THROW(sample(none, SampleSpec::count(1), 1), Error);
  auto few = population({{"s", 3}}, TaskKind::Math);
  EXPECT_THROW(sample(few, SampleSpec::count(4), 1), Error);
  EXPECT_EQ(sample(few, SampleSpec::fraction(1.0), 1), few);
}

TEST(Sampling, LargestRemainderTotalsMatchOnRandomInputs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::size_t> sizes(std::uniform_int_distribution<std::size_t>(1, 20)(rng));
    std::size_t pop = 0;
    for (auto& s : sizes) pop += (s = std::uniform_int_distribution<std::size_t>(1, 500)(rng));
    auto total = std::uniform_int_distribution<std::size_t>(0, pop)(rng);
    auto alloc = largest_remainder(sizes, total);
    std::size_t sum = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      sum += alloc[i];
      EXPECT_LE(alloc[i], sizes[i]);
      EXPECT_LT(std::abs(static_cast<double>(alloc[i]) - static_cast<double>(total * sizes[i]) / pop), 1.0);
    }
    ASSERT_EQ(sum, total);
  }
}

TEST(Grading, Choice) {
  EXPECT_TRUE(grade_choice("B", "b"));
  EXPECT_TRUE(grade_choice("b) because it is", "b"));
  EXPECT_FALSE(grade_choice("bd", "b"));
  EXPECT_FALSE(grade_choice("c", "b"));
  EXPECT_FALSE(grade_choice("", "b"));
  EXPECT_THROW(grade_choice("a", "e"), Error);
}

TEST(Grading, Math) {
  EXPECT_TRUE(grade_math("\\boxed{3/4}", "3/4"));
  EXPECT_FALSE(grade_math("0.75", "3/4"));
  EXPECT_TRUE(grade_math("42", "42."));
}

TEST(Grading, AnswerForGradingExtractsPerKind) {
  EXPECT_EQ(answer_for_grading(TaskKind::Math, "so the answer is \\boxed{7} and \\boxed{8}"), "8");
  EXPECT_EQ(answer_for_grading(TaskKind::Math, "7"), "7");
  EXPECT_EQ(answer_for_grading(TaskKind::Code, "text\n```python\nx = 1\n```"), "x = 1");
  EXPECT_EQ(answer_for_grading(TaskKind::Choice, "B"), "B");
}

TEST(Metric, OneDecimalHalfUp) {
  std::vector<ItemResult> rows;
  for (int i = 0; i < 164; ++i) rows.push_back(row("c" + std::to_string(i), i < 156));
  EXPECT_DOUBLE_EQ(compute_metric(rows, "pass@1").metric_value, 95.1);

  std::vector<ItemResult> four{row("a", true), row("b", true), row("c", true), row("d", false)};
  EXPECT_DOUBLE_EQ(compute_metric(four, "accuracy").metric_value, 75.0);

  std::vector<ItemResult> none_right{row("a", false), row("b", false)};
  EXPECT_DOUBLE_EQ(compute_metric(none_right, "accuracy").metric_value, 0.0);

  EXPECT_DOUBLE_EQ(percent_one_decimal(1, 8), 12.5);
  EXPECT_DOUBLE_EQ(percent_one_decimal(1, 16), 6.3);  // 6.25 rounds up
  EXPECT_THROW(compute_metric({}, "accuracy"), Error);
}

TEST(Metric, InvariantUnderPermutationAndReportsStrata) {
  std::mt19937_64 rng(5);
  std::vector<ItemResult> rows;
  for (int i = 0; i < 50; ++i) rows.push_back(row("i" + std::to_string(i), rng() % 3 == 0, i % 2 ? "odd" : "even"));
  auto base = compute_metric(rows, "accuracy");
  for (int k = 0; k < 20; ++k) {
    std::shuffle(rows.begin(), rows.end(), rng);
    auto r = compute_metric(rows, "accuracy");
    EXPECT_EQ(r.metric_value, base.metric_value);
    EXPECT_EQ(r.per_stratum, base.per_stratum);
    EXPECT_EQ(r.per_item, base.per_item);
  }
  EXPECT_EQ(base.per_stratum.size(), 2u);
  EXPECT_EQ(to_json(base)["per_item"].size(), 50u);
  EXPECT_NE(render_table(base).find("overall"), std::string::npos);
}

TEST(Csv, QuotedFieldsAndNewlines) {
  auto rows = parse_csv("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",x,\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
  EXPECT_EQ(rows[1], (std::vector<std::string>{"multi\nline", "x", ""}));
  EXPECT_THROW(parse_csv("\"open"), Error);
}

TEST(Datasets, LoadsAllThreeLayouts) {
  TempDir dir;
  write_text(dir / "code.jsonl",
             R"({"task_id":"T/0","prompt":"def f(x):\n","test":"def check(c):\n    assert c(1) == 1\n","entry_point":"f"})"
             "\n\n");
  auto code = load_code_benchmark(dir / "code.jsonl");
  ASSERT_EQ(code.size(), 1u);
  EXPECT_EQ(code[0].kind, TaskKind::Code);
  EXPECT_EQ(code[0].entry_point, "f");
  EXPECT_NE(code[0].prompt.find("def f(x):"), std::string::npos);

  write_text(dir / "mc" / "anatomy_test.csv", "What?,w,x,y,z,C\n\"Why, then?\",w,x,y,z,a\n");
  auto choice = load_choice_benchmark(dir / "mc");
  ASSERT_EQ(choice.size(), 2u);
  EXPECT_EQ(choice[0].stratum, "anatomy");
  EXPECT_EQ(choice[0].reference, "c");
  EXPECT_EQ(choice[1].id, "anatomy/1");

  write_text(dir / "math" / "algebra" / "1.json",
             R"({"problem":"1+1?","solution":"It is \\boxed{2}.","level":"Level 1","type":"Algebra"})");
  auto math = load_math_benchmark(dir / "math");
  ASSERT_EQ(math.size(), 1u);
  EXPECT_EQ(math[0].reference, "2");
  EXPECT_EQ(math[0].stratum, "Algebra/Level 1");
  EXPECT_EQ(math[0].id, "algebra/1.json");
}

TEST(Datasets, BadInputsAreDatasetErrors) {
  TempDir dir;
  write_text(dir / "mc" / "x_test.csv", "q,a,b,c,d,E\n");
  try {
    load_choice_benchmark(dir / "mc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Dataset);
  }
  write_text(dir / "code.jsonl", "not json\n");
  EXPECT_THROW(load_code_benchmark(dir / "code.jsonl"), Error);
  write_text(dir / "math" / "a.json", R"({"problem":"p","solution":"no box","level":"1","type":"t"})");
  EXPECT_THROW(load_math_benchmark(dir / "math"), Error);
  EXPECT_THROW(load_math_benchmark(dir / "missing"), std::exception);
}

class ShimTest : public ::testing::Test {
 protected:
  void SetUp() override {
    script_ = dir_ / "fake_shim.py";
    write_text(script_, R"(import json, sys, time
for line in sys.stdin:
    req = json.loads(line)
    src = req["solution_source"]
    if "HANG" in src:
        time.sleep(30)
    if "DIE" in src:
        sys.exit(3)
    if "GARBAGE" in src:
        print("not json", flush=True)
        continue
    status = "pass" if "return x" in src else "fail"
    print(json.dumps({"status": status, "detail": req["entry_point"]}), flush=True)
)");
  }

  ShimClient client() { return ShimClient({"python3", script_.string()}); }

  TempDir dir_;
  std::filesystem::path script_;
};

TEST_F(ShimTest, PassAndFailOverOneProcess) {
  auto shim = client();
  auto r = shim.run(ExecRequest{"def f(x):\n    return x", "check", "f", 5});
  EXPECT_EQ(r.status, CodeVerdict::Pass);
  EXPECT_EQ(r.detail, "f");
  EXPECT_EQ(grade_code(shim, "def f(x):\n    pass", "check", "f", 5), CodeVerdict::Fail);
}

TEST_F(ShimTest, TimeoutAndCrashAreReported) {
  auto shim = client();
  EXPECT_EQ(grade_code(shim, "x", "t", "f", 5), CodeVerdict::Fail);
  auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(grade_code(shim, "HANG", "t", "f", 0.2), CodeVerdict::Timeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
  EXPECT_EQ(grade_code(shim, "GARBAGE", "t", "f", 5), CodeVerdict::Error);
  EXPECT_EQ(grade_code(shim, "DIE", "t", "f", 5), CodeVerdict::Error);
  // A fresh process is started after a crash.
  EXPECT_EQ(grade_code(shim, "return x", "t", "f", 5), CodeVerdict::Pass);
}

TEST_F(ShimTest, MissingExecutableIsShimUnavailable) {
  ShimClient missing({"/nonexistent/halo-shim"});
  try {
    missing.run(ExecRequest{"x", "t", "f", 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShimUnavailable);
  }
  ShimClient dies({"python3", "-c", "import sys; sys.exit(1)"});
  EXPECT_THROW(dies.run(ExecRequest{"x", "t", "f", 1}), Error);
}

TEST(RunBench, GradesEveryItemAndRecordsErrors) {
  auto items = population({{"A", 6}, {"B", 4}}, TaskKind::Math);
  std::atomic<int> solved{0};
  auto report = run_bench(
      items,
      [&](const BenchmarkItem& item) -> std::string {
        ++solved;
        if (item.id == "B#3") throw Error(Errc::NoAnswer, "boom");
        return item.id.back() == '0' ? "a" : "b";
      },
      [](const BenchmarkItem& item, const std::string& p) { return grade_math(p, item.reference); },
      BenchOptions{3});
  EXPECT_EQ(solved.load(), 10);
  EXPECT_EQ(report.metric_name, "accuracy");
  EXPECT_DOUBLE_EQ(report.metric_value, 20.0);
  EXPECT_DOUBLE_EQ(report.per_stratum.at("A"), 16.7);
  EXPECT_DOUBLE_EQ(report.per_stratum.at("B"), 25.0);
  auto failed = std::find_if(report.per_item.begin(), report.per_item.end(), [](auto& r) { return r.id == "B#3"; });
  ASSERT_NE(failed, report.per_item.end());
  EXPECT_FALSE(failed->correct);
  EXPECT_NE(failed->error.find("boom"), std::string::npos);
}
