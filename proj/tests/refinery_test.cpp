#include <gtest/gtest.h>

#include "halo/digest.hpp"
#include "halo/prompt_assets.hpp"
#include "halo/refinery.hpp"
#include "test_support.hpp"

using namespace halo;
using halo::testing::RecordingBackend;

namespace {

const char* kF = R"({"task_type":"code generation","core_intent":"reverse a string","key_details":["return a function"]})";
const char* kTemplate = "## Task\nReverse.\n## Objectives\nBe right.\n## Inputs\nA string.\n## Output Format\nCode.";

struct Rig {
  std::shared_ptr<ScriptedBackend> script = std::make_shared<ScriptedBackend>();
  std::shared_ptr<RecordingBackend> recorder = std::make_shared<RecordingBackend>(script);
  Gateway gateway{recorder};
  PromptRefinery refinery;

  explicit Rig(RefineryOptions options = {}) : refinery(gateway, options) {}
};

std::string representation_digest(const ChatRequest& r) {
  const auto& msg = r.user_messages.at(0);
  auto pos = msg.find("Structured task representation:\n");
  EXPECT_NE(pos, std::string::npos);
  return sha256_hex(msg.substr(pos));
}

}  // namespace

TEST(ParseTask, ReturnsScriptedRepresentation) {
  Rig rig;
  rig.script->push("task_parser", kF);
  auto f = rig.refinery.parse_task("reverse a string in python");
  EXPECT_EQ(f.task_type, "code generation");
  EXPECT_EQ(f.core_intent, "reverse a string");
  EXPECT_EQ(f.key_details, std::vector<std::string>{"return a function"});
}

TEST(ParseTask, ProseAroundJsonIsTolerated) {
  Rig rig;
  rig.script->push("task_parser", std::string("Sure, here it is:\n```json\n") + kF + "\n```\nAnything else?");
  EXPECT_EQ(rig.refinery.parse_task("q").core_intent, "reverse a string");
}

TEST(ParseTask, MissingComponentIsEmptyField) {
  Rig rig;
  rig.script->push("task_parser", R"({"task_type":"x","key_details":["y"]})");
  try {
    rig.refinery.parse_task("q");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyField);
  }
  EXPECT_EQ(rig.gateway.call_count("task_parser"), 1u);

  Rig blank;
  blank.script->push("task_parser", R"({"task_type":"x","core_intent":"  ","key_details":["y"]})");
  EXPECT_THROW(blank.refinery.parse_task("q"), Error);
  EXPECT_THROW(blank.refinery.parse_task(""), Error);
}

TEST(ParseTask, NonJsonTwiceIsMalformed) {
  Rig rig;
  rig.script->push("task_parser", "I cannot");
  rig.script->push("task_parser", "still cannot");
  try {
    rig.refinery.parse_task("q");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), GatewayErrorKind::MalformedResponse);
  }
  EXPECT_EQ(rig.gateway.call_count("task_parser"), 2u);
}

TEST(BuildTemplate, ReturnsReplyWithAllSections) {
  Rig rig;
  rig.script->push("prompt_template", kTemplate);
  EXPECT_EQ(rig.refinery.build_template("q", representation_from_text(kF)), kTemplate);
}

TEST(BuildTemplate, ThreeMarkersTwiceIsMissingSection) {
  Rig rig;
  const std::string three = "## Task\nx\n## Objectives\ny\n## Inputs\nz";
  rig.script->push("prompt_template", three);
  rig.script->push("prompt_template", three);
  try {
    rig.refinery.build_template("q", representation_from_text(kF));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingSection);
  }
  EXPECT_EQ(rig.gateway.call_count("prompt_template"), 2u);
}

TEST(OptimizePrompt, PassesThroughAndGatesToolClause) {
  Rig off(RefineryOptions{{}, TaskKind::Code, false});
  off.script->push("prompt_optimizer", "QOPT");
  EXPECT_EQ(off.refinery.optimize_prompt(kTemplate, representation_from_text(kF)), "QOPT");
  const std::string clause(prompts::tool_clause);
  ASSERT_FALSE(clause.empty());
  EXPECT_EQ(off.recorder->requests.at(0).system_prompt.find(clause), std::string::npos);
  EXPECT_EQ(off.refinery.optimizer_instruction().find("{{"), std::string::npos);

  Rig on(RefineryOptions{{}, TaskKind::Code, true});
  EXPECT_NE(on.refinery.optimizer_instruction().find(clause), std::string::npos);

  Rig math_with_tool(RefineryOptions{{}, TaskKind::Math, true});
  EXPECT_EQ(math_with_tool.refinery.optimizer_instruction().find(clause), std::string::npos);
}

TEST(OptimizePrompt, InstructionListsStrategyMenu) {
  Rig rig;
  auto text = text::lower(rig.refinery.optimizer_instruction());
  for (auto s : {"chain-of-thought", "self-consistency", "least-to-most", "tree-of-thoughts", "zero-shot"}) {
    EXPECT_NE(text.find(s), std::string::npos) << s;
  }
}

TEST(SynthesizePrompt, PassThroughAndEmptyReply) {
  Rig rig;
  rig.script->push("prompt_generator", "QSTAR");
  rig.script->push("prompt_generator", "   ");
  auto f = representation_from_text(kF);
  EXPECT_EQ(rig.refinery.synthesize_prompt("QOPT", f), "QSTAR");
  try {
    rig.refinery.synthesize_prompt("QOPT", f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyField);
  }
}

TEST(Refine, FullPipelinePopulatesBundleInOrder) {
  Rig rig;
  rig.script->push("task_parser", kF);
  rig.script->push("prompt_template", kTemplate);
  rig.script->push("prompt_optimizer", "QOPT");
  rig.script->push("prompt_generator", "QSTAR");
  auto b = rig.refinery.refine("reverse a string");
  EXPECT_EQ(b.raw_query, "reverse a string");
  EXPECT_EQ(b.representation, representation_from_text(kF));
  EXPECT_EQ(b.initial_template, kTemplate);
  EXPECT_EQ(b.optimized_prompt, "QOPT");
  EXPECT_EQ(b.refined_prompt, std::optional<std::string>("QSTAR"));
  EXPECT_EQ(b.prompt(), "QSTAR");

  const auto& reqs = rig.recorder->requests;
  ASSERT_EQ(reqs.size(), 4u);
  EXPECT_EQ(reqs[0].routing_key, "task_parser");
  EXPECT_EQ(reqs[1].routing_key, "prompt_template");
  EXPECT_EQ(reqs[2].routing_key, "prompt_optimizer");
  EXPECT_EQ(reqs[3].routing_key, "prompt_generator");

  // The structured representation reaches P2, P3 and P4 unchanged.
  const auto d = representation_digest(reqs[1]);
  EXPECT_EQ(representation_digest(reqs[2]), d);
  EXPECT_EQ(representation_digest(reqs[3]), d);
  EXPECT_EQ(sha256_hex(representation_block(b.representation)), d);
}

TEST(Refine, AblatedBundlePassesRawQueryThrough) {
  auto b = unrefined_bundle("What is 2+2?");
  EXPECT_EQ(b.prompt(), "What is 2+2?");
  EXPECT_EQ(b.refined_prompt, std::optional<std::string>("What is 2+2?"));
  EXPECT_THROW(unrefined_bundle("  "), Error);
}

TEST(Prompts, AssetsAreVersionedAndNonEmpty) {
  EXPECT_EQ(prompts::version, "v1");
  for (auto p : {prompts::task_parser, prompts::prompt_template, prompts::prompt_optimizer, prompts::prompt_generator,
                 prompts::planner, prompts::role_designer, prompts::judge, prompts::scorer}) {
    EXPECT_FALSE(text::trim(p).empty());
  }
  for (auto m : kTemplateSections) EXPECT_NE(prompts::prompt_template.find(m), std::string_view::npos) << m;
}
