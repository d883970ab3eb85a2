// Copyright 2026 The selfimprove Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "selfimprove/prompting.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace selfimprove {
namespace {

using testing::kAmyPath;
using testing::kAmyQuestion;

std::vector<Exemplar> gsm8k_bank() {
  return load_exemplars(resolve_prompt_bank("gsm8k"), TaskSchema::numeric());
}

Question amy() { return Question("amy", kAmyQuestion, TaskSchema::numeric()); }

TEST(RenderPrompt, ZeroShotStyles) {
  const PromptTemplate cot{PromptStyle::kZeroshotCot, {}};
  const PromptTemplate direct{PromptStyle::kZeroshotDirect, {}};
  EXPECT_EQ(render_prompt(cot, amy()), kAmyQuestion + "\nA: Let's think step by step.");
  EXPECT_EQ(render_prompt(direct, amy()), kAmyQuestion + "\nA:");
}

TEST(RenderPrompt, FewShotBlocks) {
  const PromptTemplate tpl{PromptStyle::kFewshotCot,
                           {{"What is 1 + 1?", "1 + 1 = 2. The answer is 2.", "2"},
                            {"What is 2 + 3?", "2 + 3 = 5. The answer is 5.", "5"}}};
  EXPECT_EQ(render_prompt(tpl, "What is 4 + 4?"),
            "Q: What is 1 + 1?\nA: 1 + 1 = 2. The answer is 2.\n"
            "Q: What is 2 + 3?\nA: 2 + 3 = 5. The answer is 5.\n"
            "What is 4 + 4?\nA:");
  const PromptTemplate std_tpl{PromptStyle::kFewshotStandard, tpl.exemplars};
  EXPECT_EQ(render_prompt(std_tpl, "What is 4 + 4?"),
            "Q: What is 1 + 1?\nA: The answer is 2.\n"
            "Q: What is 2 + 3?\nA: The answer is 5.\n"
            "What is 4 + 4?\nA:");
}

TEST(RenderPrompt, TemplateInvariantsEnforced) {
  EXPECT_THROW(render_prompt(PromptTemplate{PromptStyle::kFewshotCot, {}}, amy()),
               std::invalid_argument);
  EXPECT_THROW(render_prompt(PromptTemplate{PromptStyle::kZeroshotCot, {{"q", "", "1"}}}, amy()),
               std::invalid_argument);
}

TEST(RenderPrompt, CharacterCap) {
  PromptTemplate tpl{PromptStyle::kZeroshotDirect, {}, 20};
  EXPECT_THROW(render_prompt(tpl, amy()), DataError);
  tpl.max_chars = 1000;
  EXPECT_NO_THROW(render_prompt(tpl, amy()));
}

TEST(RenderPrompt, InjectiveInQuestion) {
  const auto t = make_format_templates(gsm8k_bank());
  const std::vector<std::string> qs = {"a", "b", "a ", " a", "What?", "What?\n"};
  for (const auto* tpl : {&t.fewshot_cot, &t.fewshot_standard, &t.zeroshot_cot, &t.zeroshot_direct}) {
    std::set<std::string> seen;
    for (const auto& q : qs) EXPECT_TRUE(seen.insert(render_prompt(*tpl, q)).second);
    EXPECT_EQ(render_prompt(*tpl, "x"), render_prompt(*tpl, "x"));
  }
}

TEST(StripReasoning, KeepsFinalAnswerSentence) {
  const auto bank = gsm8k_bank();
  const auto stripped = strip_reasoning(bank[0]);
  EXPECT_EQ(stripped.reasoning, "The answer is 6.");
  EXPECT_EQ(stripped.question, bank[0].question);
  EXPECT_EQ(stripped.answer, "6");
}

TEST(StripReasoning, IdempotentAndCapitalizes) {
  const Exemplar e{"q", "The answer is 6.", "6"};
  EXPECT_EQ(strip_reasoning(e), e);
  const Exemplar drop{"q", "1958 - 1951 = 7. So the answer is 7.", "7"};
  EXPECT_EQ(strip_reasoning(drop).reasoning, "The answer is 7.");
}

TEST(StripReasoning, MissingMarkerThrows) {
  const std::string reasoning = "We start with 15 trees and end with 21.";
  ASSERT_EQ(reasoning.find("The answer is"), std::string::npos);  // substring-search oracle
  EXPECT_THROW(strip_reasoning(Exemplar{"q", reasoning, "6"}), DataError);
  EXPECT_THROW(strip_reasoning(Exemplar{"q", "", "6"}), DataError);
}

TEST(AugmentPath, AmyPathFourFormats) {
  const auto bank = gsm8k_bank();
  const auto t = make_format_templates(bank);
  const SampledPath path{"amy", 0, kAmyPath, 0.7, "mock"};
  const auto ex = augment_path(amy(), path, "9", t);
  ASSERT_EQ(ex.size(), 4u);

  std::string cot_block, std_block;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (i > 0) cot_block += "\n", std_block += "\n";
    cot_block += "Q: " + bank[i].question + "\nA: " + bank[i].reasoning;
    std_block += "Q: " + bank[i].question + "\nA: The answer is " + bank[i].answer + ".";
  }
  EXPECT_EQ(ex[0].input, cot_block + "\n" + kAmyQuestion + "\nA:");
  EXPECT_EQ(ex[0].output, kAmyPath);
  EXPECT_EQ(ex[1].input, std_block + "\n" + kAmyQuestion + "\nA:");
  EXPECT_EQ(ex[1].output, "The answer is 9.");
  EXPECT_EQ(ex[2].input, kAmyQuestion + "\nA: Let's think step by step.");
  EXPECT_EQ(ex[2].output, kAmyPath);
  EXPECT_EQ(ex[3].input, kAmyQuestion + "\nA:");
  EXPECT_EQ(ex[3].output, "The answer is 9.");
  for (int f = 0; f < 4; ++f) {
    EXPECT_EQ(ex[f].format_id, f + 1);
    EXPECT_EQ(ex[f].question_id, "amy");
    EXPECT_EQ(ex[f].path_index, 0u);
  }
}

TEST(AugmentPath, RejectsNonSupportingPath) {
  const auto t = make_format_templates(gsm8k_bank());
  const SampledPath path{"amy", 0, kAmyPath, 0.7, "mock"};
  EXPECT_THROW(augment_path(amy(), path, "10", t), std::invalid_argument);
}

TEST(AugmentPath, ChoiceAnswersKeepBankSurfaceForm) {
  const auto bank = load_exemplars(resolve_prompt_bank("arc"), TaskSchema::multiple_choice(4));
  const auto t = make_format_templates(bank);
  const Question q("arc-1", "Which is a liquid? (a) ice (b) water (c) steam (d) rock",
                   TaskSchema::multiple_choice(4));
  const SampledPath path{"arc-1", 3, "Water is a liquid at room temperature. The answer is (b).",
                         0.7, "mock"};
  const auto ex = augment_path(q, path, "b", t);
  EXPECT_EQ(ex[1].output, "The answer is (b).");
  EXPECT_EQ(ex[3].output, "The answer is (b).");
  EXPECT_NE(ex[1].input.find("\nA: The answer is (a).\n"), std::string::npos);
}

TEST(AugmentPath, DirectFormatsCarryOnlyTheAnswerSentence) {
  const auto t = make_format_templates(gsm8k_bank());
  for (int k = 0; k < 50; ++k) {
    const std::string ans = std::to_string(k * 7);
    const std::string text = "Step one. Step two gives " + ans + ". The answer is " + ans + ".";
    const auto ex = augment_path(amy(), SampledPath{"amy", std::size_t(k), text, 0.7, "m"}, ans, t);
    ASSERT_EQ(ex.size(), 4u);
    std::set<int> ids;
    for (const auto& e : ex) ids.insert(e.format_id);
    EXPECT_EQ(ids, (std::set<int>{1, 2, 3, 4}));
    EXPECT_EQ(ex[1].output, "The answer is " + ans + ".");
    EXPECT_EQ(ex[3].output, ex[1].output);
    EXPECT_TRUE(ex[2].input.ends_with("A: Let's think step by step."));
  }
}

TEST(PromptBanks, AllBundledBanksLoad) {
  for (const auto& b : kBundledBanks) {
    const auto bank = load_exemplars(resolve_prompt_bank(std::string(b.name)), parse_schema(b.schema));
    EXPECT_FALSE(bank.empty()) << b.name;
    const auto t = make_format_templates(bank);
    for (const auto& e : t.fewshot_standard.exemplars)
      EXPECT_TRUE(e.reasoning.starts_with("The answer is")) << b.name;
  }
  EXPECT_EQ(gsm8k_bank().size(), 8u);
  EXPECT_THROW(resolve_prompt_bank("no-such-bank"), ConfigError);
}

}  // namespace
}  // namespace selfimprove
