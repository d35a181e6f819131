#include "indukt/prompts.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

namespace indukt::prompts {
namespace {

using providers::Role;

std::vector<corpus::Example> two_examples() { return {{{1, 2}, {2, 1}}, {{}, {}}}; }

TEST(Prompts, FormatExamples) {
  EXPECT_EQ(format_examples(two_examples()), "[1, 2] -> [2, 1]\n[] -> []");
}

TEST(Prompts, GeneratorCarriesExamples) {
  PromptContext ctx;
  ctx.examples = two_examples();
  const auto m = render_prompt(Stage::Generator, ctx);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].role, Role::System);
  EXPECT_EQ(m[1].role, Role::User);
  EXPECT_NE(m[1].content.find("[1, 2] -> [2, 1]"), std::string::npos);
  EXPECT_EQ(m[1].content.find("{{"), std::string::npos);
}

TEST(Prompts, TrialOneHasNoExamplesMarker) {
  PromptContext ctx;
  ctx.examples = std::vector<corpus::Example>{};
  const auto m = render_prompt(Stage::Generator, ctx);
  EXPECT_NE(m[1].content.find("(no examples yet)"), std::string::npos);
}

TEST(Prompts, SummarizerNumbersHypotheses) {
  PromptContext ctx;
  ctx.hypotheses = std::vector<std::string>{"Reverse the list.", "Sort it."};
  const auto m = render_prompt(Stage::Summarizer, ctx);
  const auto body = extract_tagged(m, "hypotheses");
  ASSERT_TRUE(body);
  EXPECT_NE(body->find("1. Reverse the list."), std::string::npos);
  EXPECT_NE(body->find("2. Sort it."), std::string::npos);
  EXPECT_NE(m[1].content.find("8 distinct"), std::string::npos);
}

TEST(Prompts, ImplementorAndRefinement) {
  PromptContext ctx;
  ctx.examples = two_examples();
  ctx.hypothesis = "Reverse the list.";
  const auto impl = render_prompt(Stage::Implementor, ctx);
  EXPECT_EQ(extract_tagged(impl, "hypothesis"), "Reverse the list.");

  ctx.program = "sort";
  ctx.error = "Input [1, 2]: expected [2, 1], got [1, 2]";
  const auto ref = render_prompt(Stage::Refinement, ctx);
  ASSERT_EQ(ref.size(), impl.size() + 2);
  for (std::size_t i = 0; i < impl.size(); ++i) EXPECT_EQ(ref[i], impl[i]);
  EXPECT_EQ(ref[impl.size()].role, Role::Assistant);
  EXPECT_NE(ref[impl.size()].content.find("sort"), std::string::npos);
  EXPECT_NE(ref.back().content.find("expected [2, 1], got [1, 2]"), std::string::npos);
}

TEST(Prompts, EvaluatorCarriesBothTexts) {
  PromptContext ctx;
  ctx.hypothesis = "Flip it.";
  ctx.ground_truth = "Reverse the list.";
  const auto m = render_prompt(Stage::Evaluator, ctx);
  EXPECT_EQ(extract_tagged(m, "ground_truth"), "Reverse the list.");
  EXPECT_EQ(extract_tagged(m, "hypothesis"), "Flip it.");
}

TEST(Prompts, MissingFieldThrows) {
  PromptContext ctx;
  EXPECT_THROW(render_prompt(Stage::Generator, ctx), PromptError);
  ctx.examples = two_examples();
  EXPECT_THROW(render_prompt(Stage::Implementor, ctx), PromptError);
}

TEST(Prompts, RenderingIsDeterministic) {
  PromptContext ctx;
  ctx.examples = two_examples();
  EXPECT_EQ(render_prompt(Stage::Direct, ctx), render_prompt(Stage::Direct, ctx));
}

TEST(Prompts, TemplateParsing) {
  const auto t = parse_template("### system\nBe brief.\n### user\nSay {{examples}}.\n");
  EXPECT_EQ(t.system, "Be brief.");
  EXPECT_EQ(t.user, "Say {{examples}}.");
  EXPECT_THROW(parse_template("stray\n### user\nx"), PromptError);
}

TEST(Prompts, DirectoryOverridesDefaults) {
  test::TempDir dir;
  std::ofstream(dir / "generator.txt") << "### user\nCustom: {{examples}}\n";
  const auto set = PromptSet::load(dir.path());
  PromptContext ctx;
  ctx.examples = two_examples();
  const auto m = render_prompt(Stage::Generator, ctx, set);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].content, "Custom: [1, 2] -> [2, 1]\n[] -> []");
  // Other stages keep the bundled text.
  EXPECT_EQ(set.get(Stage::Direct).user, PromptSet::defaults().get(Stage::Direct).user);
}

TEST(Prompts, UnknownPlaceholderRejected) {
  test::TempDir dir;
  std::ofstream(dir / "direct.txt") << "### user\n{{mystery}}\n";
  EXPECT_THROW(
      {
        const auto set = PromptSet::load(dir.path());
        PromptContext ctx;
        ctx.examples = two_examples();
        render_prompt(Stage::Direct, ctx, set);
      },
      PromptError);
}

}  // namespace
}  // namespace indukt::prompts
