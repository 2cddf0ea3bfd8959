#include <random>
#include <string>

#include <gtest/gtest.h>

#include "halo/core.hpp"
#include "halo/json_extract.hpp"

using namespace halo;

namespace {

std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static constexpr std::string_view alphabet = "aB \t\n.$\\{}()[]`x1boxed9_ ";
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  for (auto n = len(rng); n > 0; --n) s.push_back(alphabet[pick(rng)]);
  return s;
}

std::string random_wrapped(std::mt19937_64& rng) {
  static const std::vector<std::pair<std::string, std::string>> wrappers = {
      {"\\boxed{", "}"}, {"\\text{", "}"}, {"$", "$"}, {"$$", "$$"}, {"\\(", "\\)"}, {"\\[", "\\]"}, {" ", ". "}};
  std::string s = random_text(rng, 6);
  std::uniform_int_distribution<std::size_t> pick(0, wrappers.size() - 1);
  for (int depth = std::uniform_int_distribution<int>(0, 3)(rng); depth > 0; --depth) {
    const auto& [open, close] = wrappers[pick(rng)];
    s = open + s + close;
  }
  return s;
}

}  // namespace

TEST(NormalizeAnswer, ChoiceTrimsLowercasesAndDropsPeriod) {
  EXPECT_EQ(normalize_answer("  B. ", TaskKind::Choice), "b");
  EXPECT_EQ(normalize_answer("C", TaskKind::Choice), "c");
  EXPECT_EQ(normalize_answer("b. .", TaskKind::Choice), "b");
}

TEST(NormalizeAnswer, MathStripsWrappers) {
  EXPECT_EQ(normalize_answer("\\boxed{42}", TaskKind::Math), "42");
  EXPECT_EQ(normalize_answer("$\\boxed{ 42 }$.", TaskKind::Math), "42");
  EXPECT_EQ(normalize_answer("\\text{Yes}", TaskKind::Math), "yes");
  EXPECT_EQ(normalize_answer("\\boxed{a}+\\boxed{b}", TaskKind::Math), "\\boxed{a}+\\boxed{b}");
  EXPECT_EQ(normalize_answer("\\frac{1}{2}", TaskKind::Math), "\\frac{1}{2}");
}

TEST(NormalizeAnswer, CodeTakesLastFencedBlockVerbatim) {
  const std::string body = "def f():\n    return 1";
  EXPECT_EQ(normalize_answer("Here:\n```python\n" + body + "\n```\nDone.", TaskKind::Code), body);
  EXPECT_EQ(normalize_answer("```\nold()\n```\n```py\n" + body + "\n```", TaskKind::Code), body);
  EXPECT_EQ(normalize_answer("\n\n  x = 1  \n", TaskKind::Code), "  x = 1");
}

TEST(NormalizeAnswer, IdempotentOnRandomInputs) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    const std::string raw = i % 2 ? random_text(rng, 24) : random_wrapped(rng);
    for (auto kind : {TaskKind::Code, TaskKind::Choice, TaskKind::Math}) {
      const auto once = normalize_answer(raw, kind);
      ASSERT_EQ(normalize_answer(once, kind), once) << "kind " << to_string(kind) << " input '" << raw << "'";
    }
  }
}

TEST(QualityScore, RejectsOutOfRange) {
  EXPECT_EQ(make_quality_score(0.0).value(), 0.0);
  EXPECT_EQ(make_quality_score(1.0).value(), 1.0);
  EXPECT_THROW(make_quality_score(1.3), Error);
  EXPECT_THROW(make_quality_score(-0.01), Error);
  EXPECT_THROW(make_quality_score(std::nan("")), Error);
}

TEST(StatusLabel, RoundTripsAndParsesCaseInsensitively) {
  for (auto l : {StatusLabel::Success, StatusLabel::Fail, StatusLabel::Continue}) {
    EXPECT_EQ(parse_status_label(to_string(l)), l);
    nlohmann::json j = l;
    EXPECT_EQ(j.get<StatusLabel>(), l);
  }
  EXPECT_EQ(parse_status_label("SUCCESS"), StatusLabel::Success);
  EXPECT_EQ(parse_status_label(" Fail\n"), StatusLabel::Fail);
  EXPECT_THROW(parse_status_label("maybe"), Error);
}

TEST(ExecutionHistory, RequiresConsecutiveIndices) {
  ExecutionHistory h;
  h.append({Subtask{1, "a", false}, "x", 0.5});
  EXPECT_THROW(h.append({Subtask{3, "c", false}, "x", 0.5}), Error);
  EXPECT_THROW(h.append({Subtask::stop(), "x", 0.5}), Error);
  EXPECT_THROW(h.append({Subtask{2, "b", false}, "x", 1.5}), Error);
  h.append({Subtask{2, "b", false}, "y", 1.0});
  EXPECT_EQ(h.size(), 2u);
}

TEST(Json, DomainRecordsRoundTrip) {
  StructuredTaskRepresentation f{"math", "find x", {"x > 0", "integer"}};
  EXPECT_EQ(representation_from_text(to_text(f)), f);

  QueryBundle b{"raw", "tmpl", "opt", std::string("final"), f};
  EXPECT_EQ(nlohmann::json(b).get<QueryBundle>(), b);
  QueryBundle unrefined{"raw", "", "", std::nullopt, {}};
  EXPECT_EQ(nlohmann::json(unrefined).get<QueryBundle>(), unrefined);

  ExecutionHistory h;
  h.append({Subtask{1, "a", false}, "42", 0.25});
  EXPECT_EQ(nlohmann::json(h).get<ExecutionHistory>(), h);

  RoleSpec r{"solver", "You solve.", "why"};
  IntermediateOutput o{r, "42", StatusLabel::Success, make_quality_score(0.9)};
  EXPECT_EQ(nlohmann::json(o).get<IntermediateOutput>(), o);
  EXPECT_EQ(nlohmann::json(Subtask::stop()).get<Subtask>(), Subtask::stop());
}

TEST(ExtractJson, FindsLastObjectAmongProse) {
  auto j = extract_json_block("Sure! {\"a\": 1} and then ```json\n{\"b\": \"}\"}\n``` ok");
  EXPECT_EQ(j, nlohmann::json({{"b", "}"}}));
  EXPECT_THROW(extract_json_block("no json here {"), GatewayError);
  auto arr = find_last_json("roles: [1, 2] then [{\"x\": [3]}]", JsonShape::Array);
  ASSERT_TRUE(arr);
  EXPECT_EQ(*arr, nlohmann::json::parse("[{\"x\": [3]}]"));
}

TEST(ExtractJson, RecoversEmbeddedObjectFromNoise) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    nlohmann::json obj = {{"score", std::uniform_real_distribution<double>(0, 1)(rng)},
                          {"note", random_text(rng, 8)}};
    std::string prefix = random_text(rng, 20);
    std::string suffix = random_text(rng, 20);
    std::erase(suffix, '{');
    const std::string reply = prefix + obj.dump() + suffix;
    ASSERT_EQ(extract_json_block(reply), obj) << reply;
  }
}
