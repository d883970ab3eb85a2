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

#include "selfimprove/cli.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

namespace selfimprove {
namespace {

using testing::ScratchDir;

const std::filesystem::path kFixtures = SELFIMPROVE_TEST_FIXTURES;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "selfimprove");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Mock fixture answering the Table 1 question through the gsm8k bank.
std::string write_restaurant_fixture(const ScratchDir& dir) {
  const auto tpl = make_format_templates(load_exemplars(resolve_prompt_bank("gsm8k"), TaskSchema::numeric()));
  const json rec = {{"prompt", render_prompt(tpl.fewshot_cot, testing::kStefanQuestion)},
                    {"texts", testing::kStefanOutputs}};
  const auto path = dir / "fixture.jsonl";
  testing::write_text(path, rec.dump() + "\n");
  return path.string();
}

const std::string kRestaurant = (kFixtures / "gsm8k_restaurant.jsonl").string();

TEST(Cli, UsageErrors) {
  EXPECT_NE(run_cli({}).code, 0);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"generate", "--no-such-flag"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, ConfigErrorExitsTwo) {
  ScratchDir dir;
  const auto r = run_cli({"generate", "--dataset", kRestaurant, "--prompts", "gsm8k", "--m", "0",
                          "--run", (dir / "run").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("m"), std::string::npos);
  EXPECT_EQ(run_cli({"generate", "--dataset", kRestaurant, "--prompts", "nope", "--dry-run"}).code,
            cli::kExitConfig);
  EXPECT_EQ(run_cli({"generate", "--dataset", kRestaurant, "--prompts", "gsm8k", "--backend", "mock",
                     "--run", (dir / "run").string()}).code,
            cli::kExitConfig);
}

TEST(Cli, DryRunSendsNothing) {
  ScratchDir dir;
  const auto r = run_cli({"generate", "--dataset", kRestaurant, "--prompts", "gsm8k", "--m", "3",
                          "--dry-run", "--run", (dir / "run").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "planned: 1 questions, 1 requests, 3 samples\n");
  EXPECT_FALSE(std::filesystem::exists(dir / "run" / "exports"));
}

TEST(Cli, GenerateThenExportManifest) {
  ScratchDir dir;
  const auto fixture = write_restaurant_fixture(dir);
  const auto run = (dir / "run").string();
  const auto r = run_cli({"generate", "--dataset", kRestaurant, "--prompts", "gsm8k", "--m", "3",
                          "--fixture", fixture, "--run", run});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("examples 8"), std::string::npos) << r.out;

  const auto m = run_cli({"export-manifest", "--run", run, "--steps", "500", "--lr", "1e-4",
                          "--out", (dir / "ft.json").string()});
  ASSERT_EQ(m.code, 0) << m.err;
  const auto man = json::parse(testing::read_text(dir / "ft.json"));
  EXPECT_EQ(man.at("n_examples"), 8);
  EXPECT_EQ(man.at("steps"), 500);
  EXPECT_DOUBLE_EQ(man.at("learning_rate").get<double>(), 1e-4);
  EXPECT_EQ(man.at("batch_size"), 32);
  EXPECT_EQ(run_cli({"export-manifest", "--run", (dir / "nowhere").string()}).code, cli::kExitUsage);
}

TEST(Cli, FixtureMissExitsThree) {
  ScratchDir dir;
  testing::write_text(dir / "empty_fixture.jsonl", "");
  const auto r = run_cli({"generate", "--dataset", kRestaurant, "--prompts", "gsm8k", "--m", "3",
                          "--fixture", (dir / "empty_fixture.jsonl").string(), "--run",
                          (dir / "run").string()});
  EXPECT_EQ(r.code, cli::kExitBackend);
  EXPECT_NE(r.err.find("backend failure"), std::string::npos);
}

TEST(Cli, EvalWritesReports) {
  ScratchDir dir;
  const auto fixture = write_restaurant_fixture(dir);
  const auto run = (dir / "run").string();
  const auto r = run_cli({"eval", "--dataset", kRestaurant, "--prompts", "gsm8k", "--m", "3",
                          "--method", "self_consistency", "--temperature", "0.7", "--fixture",
                          fixture, "--run", run});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("100.0"), std::string::npos) << r.out;
  const auto report = testing::read_text(dir / "run/reports/eval_gsm8k_restaurant_self_consistency.jsonl");
  EXPECT_NE(report.find("\"accuracy\":1.0"), std::string::npos) << report;

  const auto cal = run_cli({"calibrate", "--dataset", kRestaurant, "--prompts", "gsm8k", "--m", "3",
                            "--fixture", fixture, "--run", run, "--buckets", "3"});
  ASSERT_EQ(cal.code, 0) << cal.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run/reports/calibration_gsm8k_restaurant.jsonl"));
}

TEST(Cli, GenPromptsWithScriptedFixture) {
  ScratchDir dir;
  std::string data, fixture;
  const PromptTemplate zero{PromptStyle::kZeroshotCot, {}};
  for (int i = 0; i < 8; ++i) {
    const std::string q = "What is " + std::to_string(i) + " doubled?";
    data += json{{"id", "d" + std::to_string(i)}, {"question", q}}.dump() + "\n";
    fixture += json{{"prompt", render_prompt(zero, q)},
                    {"texts", {" Double " + std::to_string(i) + " is " + std::to_string(2 * i) +
                               ". The answer is " + std::to_string(2 * i) + "."}}}.dump() + "\n";
  }
  testing::write_text(dir / "d.jsonl", data);
  testing::write_text(dir / "f.jsonl", fixture);
  const auto r = run_cli({"gen-prompts", "--dataset", (dir / "d.jsonl").string(), "--prompts",
                          "gsm8k", "--shots", "2", "--templates", "3", "--fixture",
                          (dir / "f.jsonl").string(), "--run", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "generated 3 templates, 6 exemplars\n");
  const auto set = load_template_set(dir / "run/generated_templates.jsonl", TaskSchema::numeric());
  EXPECT_EQ(set.size(), 3u);
}

}  // namespace
}  // namespace selfimprove
