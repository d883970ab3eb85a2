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

#include "selfimprove/pipeline.hpp"

#include <gtest/gtest.h>

#include <map>

#include "test_util.hpp"

namespace selfimprove {
namespace {

using testing::ScratchDir;

const std::filesystem::path kFixtures = SELFIMPROVE_TEST_FIXTURES;

RunConfig restaurant_config() {
  RunConfig cfg;
  cfg.datasets.push_back({(kFixtures / "gsm8k_restaurant.jsonl").string(), "", TaskSchema::numeric(),
                          "gsm8k", std::nullopt});
  cfg.m = 3;
  return cfg;
}

MockBackend restaurant_mock() {
  const auto tpl = make_format_templates(
      load_exemplars(resolve_prompt_bank("gsm8k"), TaskSchema::numeric()));
  MockBackend mock;
  mock.add(render_prompt(tpl.fewshot_cot, testing::kStefanQuestion), testing::kStefanOutputs);
  return mock;
}

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> out;
  for_each_record(p, [&](std::size_t, const json& j) { out.push_back(j); });
  return out;
}

// Writes "Item N." questions with gold N.
std::string write_items(const ScratchDir& dir, const std::string& name, std::size_t n) {
  std::string body;
  for (std::size_t i = 0; i < n; ++i)
    body += json{{"id", "i" + std::to_string(i)}, {"question", "Item " + std::to_string(i) + "."},
                 {"answer", std::to_string(i)}}.dump() + "\n";
  const auto path = dir / (name + ".jsonl");
  testing::write_text(path, body);
  return path.string();
}

long item_of(const std::string& prompt) { return std::stol(prompt.substr(prompt.rfind("Item ") + 5)); }

// Path k of item N answers N when k is even or N is odd, otherwise N + 1.
std::vector<std::string> item_paths(const CompletionRequest& r) {
  const long n = item_of(r.prompt);
  std::vector<std::string> out;
  for (std::size_t k = 0; k < r.n_samples; ++k) {
    const long a = (k % 2 == 0 || n % 2 == 1) ? n : n + 1;
    out.push_back("Path " + std::to_string(k) + ". The answer is " + std::to_string(a) + ".");
  }
  return out;
}

RunConfig items_config(const std::string& path) {
  RunConfig cfg;
  cfg.datasets.push_back({path, "", TaskSchema::numeric(), "gsm8k", std::nullopt});
  cfg.m = 6;
  return cfg;
}

TEST(RunSelfImprove, RestaurantTipYieldsEightExamples) {
  ScratchDir dir;
  auto mock = restaurant_mock();
  const auto out = run_selfimprove(restaurant_config(), mock, dir / "run");
  const auto rows = read_jsonl(out.export_path);
  ASSERT_EQ(rows.size(), 8u);
  std::map<int, int> per_format;
  for (const auto& r : rows) {
    ++per_format[r.at("format_id").get<int>()];
    EXPECT_EQ(r.at("question_id"), "gsm8k-stefan");
    EXPECT_NE(r.at("path_index"), 1);
    EXPECT_DOUBLE_EQ(r.at("confidence").get<double>(), 2.0 / 3.0);
  }
  EXPECT_EQ(per_format, (std::map<int, int>{{1, 2}, {2, 2}, {3, 2}, {4, 2}}));
  EXPECT_EQ(out.counts.paths_retained, 2u);
  EXPECT_EQ(out.counts.paths_sampled, 3u);
  EXPECT_EQ(out.run_manifest.at("format_ratio"), "1:1:1:1");
  EXPECT_EQ(read_jsonl(out.plain_export_path).size(), 8u);
  EXPECT_EQ(out.finetune_manifest.at("n_examples"), 8);
  EXPECT_EQ(out.finetune_manifest.at("dataset_path"), "exports/train.jsonl");
  EXPECT_EQ(out.finetune_manifest.at("steps"), 10000);
  EXPECT_EQ(out.finetune_manifest.at("batch_size"), 32);
  for (const char* f : {"config.json", "manifests/run_manifest.json", "manifests/run_stats.json",
                        "manifests/finetune_manifest.json", "state/progress.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
}

TEST(RunSelfImprove, FormatSubset) {
  ScratchDir dir;
  auto mock = restaurant_mock();
  auto cfg = restaurant_config();
  cfg.formats = {2};
  const auto out = run_selfimprove(cfg, mock, dir / "run");
  const auto rows = read_jsonl(out.export_path);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.at("format_id"), 2);
    EXPECT_EQ(r.at("output"), "The answer is 108.");
  }
  EXPECT_EQ(out.run_manifest.at("format_ratio"), "0:1:0:0");
}

TEST(RunSelfImprove, EmptyDatasetExportsNothing) {
  ScratchDir dir;
  MockBackend mock;
  RunConfig cfg;
  cfg.datasets.push_back({(kFixtures / "empty.jsonl").string(), "", TaskSchema::numeric(), "gsm8k",
                          std::nullopt});
  const auto out = run_selfimprove(cfg, mock, dir / "run");
  EXPECT_TRUE(testing::read_text(out.export_path).empty());
  EXPECT_EQ(mock.calls(), 0u);
  EXPECT_EQ(out.finetune_manifest.at("n_examples"), 0);
}

TEST(RunSelfImprove, InvalidConfigNamesTheField) {
  ScratchDir dir;
  MockBackend mock;
  auto cfg = restaurant_config();
  cfg.m = 0;
  try {
    run_selfimprove(cfg, mock, dir / "run");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "m");
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "run"));
}

TEST(RunSelfImprove, NeverReadsGold) {
  ScratchDir dir;
  const auto before = gold_reads_in_unsupervised_scope();
  ScriptedBackend b("items", item_paths);
  run_selfimprove(items_config(write_items(dir, "items", 12)), b, dir / "run");
  EXPECT_EQ(gold_reads_in_unsupervised_scope(), before);
}

TEST(RunSelfImprove, MatchesIndependentOracle) {
  ScratchDir dir;
  ScriptedBackend b("items", item_paths);
  auto cfg = items_config(write_items(dir, "items", 10));
  cfg.m = 5;
  const auto out = run_selfimprove(cfg, b, dir / "run");
  // Odd items: all 5 paths agree. Even items: paths 0, 2, 4 win 3 to 2.
  std::size_t want = 0;
  for (long n = 0; n < 10; ++n) want += 4 * (n % 2 == 1 ? 5 : 3);
  const auto rows = read_jsonl(out.export_path);
  EXPECT_EQ(rows.size(), want);
  for (const auto& r : rows) {
    const long n = std::stol(r.at("question_id").get<std::string>().substr(1));
    if (n % 2 == 0) {
      EXPECT_EQ(r.at("path_index").get<int>() % 2, 0);
      EXPECT_DOUBLE_EQ(r.at("confidence").get<double>(), 0.6);
    }
  }
}

TEST(RunSelfImprove, MinConfidenceDropsWeakQuestions) {
  ScratchDir dir;
  ScriptedBackend b("items", item_paths);
  auto cfg = items_config(write_items(dir, "items", 10));
  cfg.m = 5;
  cfg.min_confidence = 0.7;
  const auto out = run_selfimprove(cfg, b, dir / "run");
  EXPECT_EQ(out.counts.examples_emitted, 5u * 5u * 4u);
  EXPECT_EQ(out.counts.questions_with_consensus, 10u);
}

TEST(RunSelfImprove, DeterministicAndCacheWarm) {
  ScratchDir dir;
  const auto data = write_items(dir, "items", 20);
  auto cfg = items_config(data);
  cfg.shuffle = true;
  cfg.seed = 42;
  ScriptedBackend b1("items", item_paths), b2("items", item_paths);
  const auto a = run_selfimprove(cfg, b1, dir / "a");
  const auto c = run_selfimprove(cfg, b2, dir / "c");
  EXPECT_EQ(testing::read_text(a.export_path), testing::read_text(c.export_path));
  EXPECT_EQ(testing::read_text(dir / "a/manifests/run_manifest.json"),
            testing::read_text(dir / "c/manifests/run_manifest.json"));
  EXPECT_EQ(testing::read_text(dir / "a/manifests/finetune_manifest.json"),
            testing::read_text(dir / "c/manifests/finetune_manifest.json"));

  ScriptedBackend warm("items", item_paths);
  const auto again = run_selfimprove(cfg, warm, dir / "a", RunOptions{.resume = false});
  EXPECT_EQ(warm.calls(), 0u);
  EXPECT_EQ(again.backend_calls, 0u);
  EXPECT_DOUBLE_EQ(again.run_stats.at("cache_hit_rate").get<double>(), 1.0);
  EXPECT_EQ(testing::read_text(again.export_path), testing::read_text(c.export_path));
}

TEST(RunSelfImprove, ShuffleIsSeeded) {
  ScratchDir dir;
  const auto data = write_items(dir, "items", 10);
  auto cfg = items_config(data);
  ScriptedBackend b("items", item_paths);
  const auto plain = testing::read_text(run_selfimprove(cfg, b, dir / "p").export_path);
  cfg.shuffle = true;
  const auto s1 = testing::read_text(run_selfimprove(cfg, b, dir / "s1").export_path);
  cfg.seed = 1;
  const auto s2 = testing::read_text(run_selfimprove(cfg, b, dir / "s2").export_path);
  EXPECT_NE(plain, s1);
  EXPECT_NE(s1, s2);
  EXPECT_EQ(plain.size(), s1.size());
}

TEST(RunSelfImprove, ResumesAfterBackendFailure) {
  ScratchDir dir;
  const auto data = write_items(dir, "items", 30);
  auto cfg = items_config(data);
  cfg.max_in_flight = 4;

  ScriptedBackend clean("items", item_paths);
  const auto reference = testing::read_text(run_selfimprove(cfg, clean, dir / "ref").export_path);

  std::atomic<bool> broken{true};
  ScriptedBackend flaky("items", [&](const CompletionRequest& r) {
    if (broken && item_of(r.prompt) == 17) throw TransportError(5, "server down");
    return item_paths(r);
  });
  EXPECT_THROW(run_selfimprove(cfg, flaky, dir / "run"), TransportError);
  const auto done = read_jsonl(dir / "run/state/progress.jsonl");
  EXPECT_EQ(done.size(), 17u);
  const auto first_calls = flaky.calls();

  broken = false;
  const auto out = run_selfimprove(cfg, flaky, dir / "run");
  EXPECT_EQ(testing::read_text(out.export_path), reference);
  EXPECT_EQ(out.run_stats.at("resumed_questions"), 17);
  EXPECT_LE(flaky.calls() - first_calls, 13u);
}

TEST(RunSelfImprove, MixedDatasetsArePrefixed) {
  ScratchDir dir;
  auto cfg = items_config(write_items(dir, "alpha", 3));
  cfg.datasets.push_back({write_items(dir, "beta", 2), "", TaskSchema::numeric(), "svamp", std::nullopt});
  ScriptedBackend b("items", item_paths);
  const auto out = run_selfimprove(cfg, b, dir / "run");
  std::set<std::string> ids;
  for (const auto& r : read_jsonl(out.export_path)) ids.insert(r.at("question_id").get<std::string>());
  EXPECT_EQ(ids, (std::set<std::string>{"alpha/i0", "alpha/i1", "alpha/i2", "beta/i0", "beta/i1"}));
  EXPECT_EQ(out.run_manifest.at("datasets").size(), 2u);
}

TEST(RunSelfImprove, SubsetUsesSeed) {
  ScratchDir dir;
  auto cfg = items_config(write_items(dir, "items", 50));
  cfg.datasets[0].subset = 7;
  EXPECT_EQ(plan_run(cfg).questions, 7u);
  EXPECT_EQ(plan_run(cfg).samples, 7u * 6u);
  ScriptedBackend b("items", item_paths);
  const auto out = run_selfimprove(cfg, b, dir / "run");
  EXPECT_EQ(out.counts.questions, 7u);
  EXPECT_EQ(b.calls(), 7u);
}

TEST(Config, MergeAndPresets) {
  RunConfig cfg;
  merge_config(cfg, json::parse(R"({"preset": "ul2", "datasets": [{"path": "x.jsonl", "prompts": "gsm8k"}]})"));
  EXPECT_EQ(cfg.m, 40u);
  EXPECT_DOUBLE_EQ(cfg.gen_temperature, 0.5);
  EXPECT_DOUBLE_EQ(cfg.eval_temperature_post, 0.7);
  EXPECT_EQ(cfg.max_tokens, 256u);
  merge_config(cfg, json::parse(R"({"preset": "default", "m": 10})"));
  EXPECT_EQ(cfg.m, 10u);
  EXPECT_DOUBLE_EQ(cfg.gen_temperature, 0.7);
  EXPECT_DOUBLE_EQ(cfg.eval_temperature_post, 1.2);

  RunConfig defaults;
  EXPECT_EQ(defaults.m, 32u);
  EXPECT_EQ(defaults.formats, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(defaults.finetune.learning_rate, 5e-5);

  auto field_of = [](const char* text) {
    RunConfig c;
    try {
      merge_config(c, json::parse(text));
      c.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  EXPECT_EQ(field_of(R"({"m": 0})"), "m");
  EXPECT_EQ(field_of(R"({"temperature": 1})"), "temperature");
  EXPECT_EQ(field_of(R"({"backend": {"kind": "mock", "fxture": "f"}})"), "backend.fxture");
  EXPECT_EQ(field_of(R"({"preset": "huge"})"), "preset");
  EXPECT_EQ(field_of(R"({"formats": [1, 5], "datasets": [{"path": "a"}]})"), "formats");
  EXPECT_EQ(field_of(R"({"datasets": []})"), "datasets");
  EXPECT_EQ(field_of(R"({"m": "many"})"), "m");
}

TEST(Config, RoundTripsThroughJson) {
  auto cfg = restaurant_config();
  cfg.datasets[0].subset = 5;
  cfg.formats = {1, 3};
  cfg.backend.options = {{"top_k", 40}};
  RunConfig back;
  merge_config(back, to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(Config, MakeBackend) {
  BackendConfig b;
  EXPECT_THROW(make_backend(b), ConfigError);
  b.fixture = (kFixtures / "gsm8k_restaurant.jsonl").string();
  EXPECT_THROW(make_backend(b), DataError);
  b.kind = "http";
  EXPECT_THROW(make_backend(b), ConfigError);
  b.url = "http://127.0.0.1:9/complete";
  EXPECT_NE(make_backend(b)->id().find("127.0.0.1:9"), std::string::npos);
}

TEST(FinetuneManifest, CountsAndRelativePath) {
  ScratchDir dir;
  testing::write_text(dir / "exports/x.jsonl", "{}\n{}\n\n{}\n");
  const auto m = make_finetune_manifest(dir.path(), dir / "exports/x.jsonl", FinetuneSettings{});
  EXPECT_EQ(m.at("n_examples"), 3);
  EXPECT_EQ(m.at("dataset_path"), "exports/x.jsonl");
  EXPECT_EQ(m.at("dataset_digest"), sha256_hex("{}\n{}\n\n{}\n"));
  EXPECT_EQ(format_ratio({1, 3}), "1:0:1:0");
}

}  // namespace
}  // namespace selfimprove
