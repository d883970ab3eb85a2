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

#pragma once

// End-to-end self-improvement runs: sample -> extract -> vote -> filter ->
// augment -> export, with per-question checkpoints, a response cache and
// run manifests.
//
// Run directory layout:
//   <run>/config.json
//   <run>/cache/<digest>
//   <run>/state/{fingerprint,progress.jsonl}
//   <run>/exports/{train.jsonl,train_plain.jsonl}
//   <run>/manifests/{run_manifest.json,run_stats.json,finetune_manifest.json}
//   <run>/reports/

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "selfimprove/backend.hpp"
#include "selfimprove/consensus.hpp"
#include "selfimprove/corpus.hpp"
#include "selfimprove/http_backend.hpp"
#include "selfimprove/prompting.hpp"

namespace selfimprove {

using ordered_json = nlohmann::ordered_json;

struct DatasetRef {
  std::string path;
  std::string name;  // defaults to the file stem
  TaskSchema schema;
  std::string prompts;  // bundled bank name or exemplar file
  std::optional<std::size_t> subset;
};

struct BackendConfig {
  std::string kind = "mock";  // mock | http
  std::string fixture;
  std::string url;
  std::string dialect = "native";
  std::string model;
  std::string auth_env = "SELFIMPROVE_API_KEY";
  std::size_t max_attempts = 5;
  std::size_t base_delay_ms = 1000;
  json options = json::object();
};

struct FinetuneSettings {
  std::size_t steps = 10000;
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
};

struct RunConfig {
  std::vector<DatasetRef> datasets;
  std::size_t m = 32;
  double gen_temperature = 0.7;
  double eval_temperature_post = 1.2;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::vector<int> formats{1, 2, 3, 4};
  double min_confidence = 0.0;
  std::uint64_t seed = 0;
  bool shuffle = false;
  std::size_t max_in_flight = 8;
  std::size_t max_prompt_chars = 0;
  std::vector<std::string> stop{"\nQ:"};
  std::optional<std::string> preset;
  BackendConfig backend;
  FinetuneSettings finetune;

  void validate() const {
    if (m < 1) throw ConfigError("m", "must be >= 1");
    if (!(gen_temperature > 0.0)) throw ConfigError("gen_temperature", "must be > 0");
    if (!(eval_temperature_post > 0.0))
      throw ConfigError("eval_temperature_post", "must be > 0");
    if (max_tokens < 1) throw ConfigError("max_tokens", "must be >= 1");
    if (formats.empty()) throw ConfigError("formats", "must not be empty");
    std::set<int> seen;
    for (int f : formats) {
      if (f < 1 || f > 4) throw ConfigError("formats", "format ids are 1..4");
      if (!seen.insert(f).second) throw ConfigError("formats", "duplicate format id");
    }
    if (!(min_confidence >= 0.0 && min_confidence <= 1.0))
      throw ConfigError("min_confidence", "must lie in [0, 1]");
    if (max_in_flight < 1) throw ConfigError("max_in_flight", "must be >= 1");
    if (datasets.empty()) throw ConfigError("datasets", "at least one dataset is required");
    std::set<std::string> names;
    for (const auto& d : datasets) {
      if (d.path.empty()) throw ConfigError("datasets.path", "must not be empty");
      if (d.prompts.empty()) throw ConfigError("datasets.prompts", "must not be empty");
      if (!names.insert(dataset_name(d)).second)
        throw ConfigError("datasets.name", "duplicate dataset name '" + dataset_name(d) + "'");
    }
    if (backend.kind != "mock" && backend.kind != "http")
      throw ConfigError("backend.kind", "expected mock or http");
  }

  static std::string dataset_name(const DatasetRef& d) {
    return d.name.empty() ? std::filesystem::path(d.path).stem().string() : d.name;
  }
};

// Named settings bundles. "default" restores the defaults; "ul2" is the
// smaller public-model configuration.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "default") {
    cfg.m = 32;
    cfg.gen_temperature = 0.7;
    cfg.eval_temperature_post = 1.2;
  } else if (name == "ul2") {
    cfg.m = 40;
    cfg.gen_temperature = 0.5;
    cfg.eval_temperature_post = 0.7;
  } else {
    throw ConfigError("preset", "unknown preset '" + name + "'");
  }
  cfg.max_tokens = kDefaultMaxTokens;
  cfg.preset = name;
}

namespace detail {

template <typename T>
T config_get(const json& j, const char* key, const std::string& prefix = {}) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known,
                           const std::string& prefix) {
  for (const auto& [k, _] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError(prefix + k, "unknown field");
  }
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  json ds = json::array();
  for (const auto& d : c.datasets) {
    json r = {{"path", d.path}, {"name", RunConfig::dataset_name(d)},
              {"schema", to_string(d.schema)}, {"prompts", d.prompts}};
    if (d.subset) r["subset"] = *d.subset;
    ds.push_back(std::move(r));
  }
  json j = {{"datasets", ds},
            {"m", c.m},
            {"gen_temperature", c.gen_temperature},
            {"eval_temperature_post", c.eval_temperature_post},
            {"max_tokens", c.max_tokens},
            {"formats", c.formats},
            {"min_confidence", c.min_confidence},
            {"seed", c.seed},
            {"shuffle", c.shuffle},
            {"max_in_flight", c.max_in_flight},
            {"max_prompt_chars", c.max_prompt_chars},
            {"stop", c.stop},
            {"backend",
             {{"kind", c.backend.kind},
              {"fixture", c.backend.fixture},
              {"url", c.backend.url},
              {"dialect", c.backend.dialect},
              {"model", c.backend.model},
              {"auth_env", c.backend.auth_env},
              {"max_attempts", c.backend.max_attempts},
              {"base_delay_ms", c.backend.base_delay_ms},
              {"options", c.backend.options}}},
            {"finetune",
             {{"steps", c.finetune.steps},
              {"learning_rate", c.finetune.learning_rate},
              {"batch_size", c.finetune.batch_size}}}};
  if (c.preset) j["preset"] = *c.preset;
  return j;
}

// Fields absent from `j` keep their current values in `cfg`; a preset is
// applied before any explicit field.
inline void merge_config(RunConfig& cfg, const json& j) {
  using detail::config_get;
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  detail::reject_unknown(j,
                         {"datasets", "m", "gen_temperature", "eval_temperature_post",
                          "max_tokens", "formats", "min_confidence", "seed", "shuffle",
                          "max_in_flight", "max_prompt_chars", "stop", "preset", "backend",
                          "finetune"},
                         "");
  if (j.contains("preset")) apply_preset(cfg, config_get<std::string>(j, "preset"));
  if (j.contains("datasets")) {
    cfg.datasets.clear();
    for (const auto& d : j.at("datasets")) {
      detail::reject_unknown(d, {"path", "name", "schema", "prompts", "subset"}, "datasets.");
      DatasetRef r;
      r.path = config_get<std::string>(d, "path", "datasets.");
      r.name = d.value("name", std::string());
      r.schema = parse_schema(d.value("schema", std::string("numeric")));
      r.prompts = d.value("prompts", r.name.empty() ? std::filesystem::path(r.path).stem().string()
                                                    : r.name);
      if (d.contains("subset")) r.subset = config_get<std::size_t>(d, "subset", "datasets.");
      cfg.datasets.push_back(std::move(r));
    }
  }
  if (j.contains("m")) {
    const auto v = config_get<long long>(j, "m");
    if (v < 1) throw ConfigError("m", "must be >= 1");
    cfg.m = static_cast<std::size_t>(v);
  }
  if (j.contains("gen_temperature")) cfg.gen_temperature = config_get<double>(j, "gen_temperature");
  if (j.contains("eval_temperature_post"))
    cfg.eval_temperature_post = config_get<double>(j, "eval_temperature_post");
  if (j.contains("max_tokens")) cfg.max_tokens = config_get<std::size_t>(j, "max_tokens");
  if (j.contains("formats")) cfg.formats = config_get<std::vector<int>>(j, "formats");
  if (j.contains("min_confidence")) cfg.min_confidence = config_get<double>(j, "min_confidence");
  if (j.contains("seed")) cfg.seed = config_get<std::uint64_t>(j, "seed");
  if (j.contains("shuffle")) cfg.shuffle = config_get<bool>(j, "shuffle");
  if (j.contains("max_in_flight")) cfg.max_in_flight = config_get<std::size_t>(j, "max_in_flight");
  if (j.contains("max_prompt_chars"))
    cfg.max_prompt_chars = config_get<std::size_t>(j, "max_prompt_chars");
  if (j.contains("stop")) cfg.stop = config_get<std::vector<std::string>>(j, "stop");
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    detail::reject_unknown(b,
                           {"kind", "fixture", "url", "dialect", "model", "auth_env",
                            "max_attempts", "base_delay_ms", "options"},
                           "backend.");
    auto& o = cfg.backend;
    o.kind = b.value("kind", o.kind);
    o.fixture = b.value("fixture", o.fixture);
    o.url = b.value("url", o.url);
    o.dialect = b.value("dialect", o.dialect);
    o.model = b.value("model", o.model);
    o.auth_env = b.value("auth_env", o.auth_env);
    if (b.contains("max_attempts")) o.max_attempts = config_get<std::size_t>(b, "max_attempts", "backend.");
    if (b.contains("base_delay_ms"))
      o.base_delay_ms = config_get<std::size_t>(b, "base_delay_ms", "backend.");
    if (b.contains("options")) o.options = b.at("options");
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    detail::reject_unknown(f, {"steps", "learning_rate", "batch_size"}, "finetune.");
    if (f.contains("steps")) cfg.finetune.steps = config_get<std::size_t>(f, "steps", "finetune.");
    if (f.contains("learning_rate"))
      cfg.finetune.learning_rate = config_get<double>(f, "learning_rate", "finetune.");
    if (f.contains("batch_size"))
      cfg.finetune.batch_size = config_get<std::size_t>(f, "batch_size", "finetune.");
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
  merge_config(cfg, j);
  return cfg;
}

inline std::unique_ptr<Backend> make_backend(const BackendConfig& b) {
  if (b.kind == "mock") {
    if (b.fixture.empty()) throw ConfigError("backend.fixture", "mock backend needs a fixture file");
    return std::make_unique<MockBackend>(MockBackend::from_file(b.fixture));
  }
  if (b.kind == "http") {
    if (b.url.empty()) throw ConfigError("backend.url", "http backend needs a url");
    HttpBackendOptions o;
    o.url = b.url;
    o.dialect = parse_dialect(b.dialect);
    o.model = b.model;
    o.auth_env = b.auth_env;
    o.retry.max_attempts = b.max_attempts;
    o.retry.base_delay = std::chrono::milliseconds(b.base_delay_ms);
    return std::make_unique<HttpBackend>(std::move(o));
  }
  throw ConfigError("backend.kind", "expected mock or http");
}

// Loaded datasets with their format templates; ids are prefixed with the
// dataset name when several datasets are mixed.
struct PreparedData {
  std::vector<Dataset> datasets;
  std::vector<FormatTemplates> templates;
  std::size_t total_questions() const {
    std::size_t n = 0;
    for (const auto& d : datasets) n += d.size();
    return n;
  }
};

inline PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData p;
  for (const auto& ref : cfg.datasets) {
    Dataset ds = load_dataset(ref.path, ref.schema, RunConfig::dataset_name(ref));
    if (ref.subset) ds = sample_subset(ds, *ref.subset, cfg.seed);
    if (cfg.datasets.size() > 1)
      for (auto& q : ds.questions) q.id = ds.name + "/" + q.id;
    p.templates.push_back(make_format_templates(
        load_exemplars(resolve_prompt_bank(ref.prompts), ref.schema), cfg.max_prompt_chars));
    p.datasets.push_back(std::move(ds));
  }
  return p;
}

struct RunPlan {
  std::size_t questions = 0;
  std::size_t requests = 0;
  std::size_t samples = 0;
};

// What a run would send to the backend, without sending anything.
inline RunPlan plan_run(const RunConfig& cfg) {
  cfg.validate();
  const auto data = prepare_data(cfg);
  RunPlan plan;
  plan.questions = data.total_questions();
  plan.requests = plan.questions;
  plan.samples = plan.questions * cfg.m;
  return plan;
}

struct StageCounts {
  std::size_t questions = 0;
  std::size_t questions_with_consensus = 0;
  std::size_t paths_sampled = 0;
  std::size_t paths_extracted = 0;
  std::size_t paths_retained = 0;
  std::size_t examples_emitted = 0;
};

struct RunOutcome {
  std::filesystem::path export_path;
  std::filesystem::path plain_export_path;
  ordered_json run_manifest;
  ordered_json run_stats;
  ordered_json finetune_manifest;
  StageCounts counts;
  std::size_t backend_calls = 0;
};

struct RunOptions {
  bool resume = true;
};

inline std::string format_ratio(const std::vector<int>& formats) {
  std::string out;
  for (int f = 1; f <= 4; ++f) {
    if (f > 1) out += ':';
    out += std::find(formats.begin(), formats.end(), f) != formats.end() ? '1' : '0';
  }
  return out;
}

// Fine-tuning hyperparameters for an export file. Paths are stored relative
// to `run_dir` so the manifest does not depend on where the run lives.
inline ordered_json make_finetune_manifest(const std::filesystem::path& run_dir,
                                           const std::filesystem::path& export_path,
                                           const FinetuneSettings& ft,
                                           const std::string& ratio = "1:1:1:1") {
  std::size_t n_examples = 0;
  {
    std::ifstream in(export_path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++n_examples;
  }
  const auto rel = std::filesystem::relative(export_path, run_dir);
  ordered_json j;
  j["dataset_path"] = rel.generic_string();
  j["dataset_digest"] = sha256_file(export_path);
  j["n_examples"] = n_examples;
  j["steps"] = ft.steps;
  j["learning_rate"] = ft.learning_rate;
  j["batch_size"] = ft.batch_size;
  j["format_ratio"] = ratio;
  return j;
}

namespace detail {

inline ordered_json example_record(const TrainingExample& e, double confidence) {
  ordered_json r;
  r["input"] = e.input;
  r["output"] = e.output;
  r["format_id"] = e.format_id;
  r["question_id"] = e.question_id;
  r["path_index"] = e.path_index;
  r["confidence"] = confidence;
  return r;
}

}  // namespace detail

// Runs the whole flow over every configured dataset. Gold answers are never
// read: the body runs under an UnsupervisedScope. A backend failure halts
// the run after checkpointing every completed question; calling again with
// resume continues from there.
inline RunOutcome run_selfimprove(const RunConfig& cfg, Backend& backend,
                                  const std::filesystem::path& run_dir,
                                  const RunOptions& opts = {}) {
  namespace fs = std::filesystem;
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  UnsupervisedScope unsupervised;

  for (const char* sub : {"cache", "state", "exports", "manifests", "reports"})
    fs::create_directories(run_dir / sub);
  const json cfg_json = to_json(cfg);
  write_file_atomic(run_dir / "config.json", cfg_json.dump(2) + "\n");

  const PreparedData data = prepare_data(cfg);
  CachingBackend cached(backend, run_dir / "cache");

  Sha256 fp;
  fp.update(cfg_json.dump()).update(backend.id());
  for (const auto& d : data.datasets) fp.update(dataset_digest(d));
  const std::string fingerprint = fp.hex();

  const fs::path progress_path = run_dir / "state" / "progress.jsonl";
  const fs::path fp_path = run_dir / "state" / "fingerprint";
  std::vector<json> progress;
  if (opts.resume && fs::exists(fp_path) && read_file(fp_path) == fingerprint &&
      fs::exists(progress_path)) {
    std::ifstream in(progress_path);
    std::string line;
    while (std::getline(in, line)) {
      try {
        progress.push_back(json::parse(line));
      } catch (const json::parse_error&) {
        break;  // torn final line from an interrupted append
      }
    }
  }
  write_file_atomic(fp_path, fingerprint);
  write_file_atomic(progress_path, to_jsonl(progress));

  struct Item {
    const Question* q;
    const FormatTemplates* tpl;
  };
  std::vector<Item> items;
  for (std::size_t d = 0; d < data.datasets.size(); ++d)
    for (const auto& q : data.datasets[d].questions) items.push_back({&q, &data.templates[d]});
  if (progress.size() > items.size()) progress.resize(items.size());
  for (std::size_t i = 0; i < progress.size(); ++i) {
    if (progress[i].value("question_id", std::string()) != items[i].q->id) {
      progress.resize(i);
      write_file_atomic(progress_path, to_jsonl(progress));
      break;
    }
  }
  const std::size_t resumed = progress.size();

  {
    std::ofstream append(progress_path, std::ios::app | std::ios::binary);
    const std::size_t chunk = cfg.max_in_flight;
    for (std::size_t start = progress.size(); start < items.size(); start += chunk) {
      const std::size_t end = std::min(items.size(), start + chunk);
      std::vector<CompletionRequest> reqs;
      for (std::size_t i = start; i < end; ++i) {
        CompletionRequest r;
        r.prompt = render_prompt(items[i].tpl->fewshot_cot, *items[i].q);
        r.temperature = cfg.gen_temperature;
        r.max_tokens = cfg.max_tokens;
        r.n_samples = cfg.m;
        r.stop = cfg.stop;
        r.seed = static_cast<std::int64_t>(cfg.seed);
        r.options = cfg.backend.options;
        reqs.push_back(std::move(r));
      }
      const auto slots = complete_batch(cached, reqs, cfg.max_in_flight);
      for (std::size_t k = 0; k < slots.size(); ++k) {
        if (!slots[k].ok()) std::rethrow_exception(slots[k].error);
        const Question& q = *items[start + k].q;
        const auto tally =
            tally_paths(q.id, q.schema, slots[k].texts, cfg.gen_temperature, backend.id());
        const auto& c = tally.consensus;
        std::vector<SampledPath> retained;
        if (c.answer && c.confidence >= cfg.min_confidence)
          retained = filter_supporting_paths(tally.paths, tally.answers, c, q.schema);
        json examples = json::array();
        for (const auto& path : retained) {
          for (auto& e : augment_path(q, path, *c.answer, *items[start + k].tpl)) {
            if (std::find(cfg.formats.begin(), cfg.formats.end(), e.format_id) ==
                cfg.formats.end())
              continue;
            examples.push_back({{"input", std::move(e.input)},
                                {"output", std::move(e.output)},
                                {"format_id", e.format_id},
                                {"path_index", e.path_index}});
          }
        }
        json rec = {{"question_id", q.id},
                    {"answer", c.answer ? json(*c.answer) : json(nullptr)},
                    {"support_count", c.support_count},
                    {"total_paths", c.total_paths},
                    {"extracted_paths", c.extracted_paths},
                    {"confidence", c.confidence},
                    {"tie", c.tie},
                    {"retained", retained.size()},
                    {"examples", std::move(examples)}};
        append << rec.dump() << '\n';
        append.flush();
        progress.push_back(std::move(rec));
      }
    }
  }

  RunOutcome out;
  std::vector<std::pair<TrainingExample, double>> all;
  for (const auto& rec : progress) {
    auto& s = out.counts;
    ++s.questions;
    if (!rec.at("answer").is_null()) ++s.questions_with_consensus;
    s.paths_sampled += rec.at("total_paths").get<std::size_t>();
    s.paths_extracted += rec.at("extracted_paths").get<std::size_t>();
    s.paths_retained += rec.at("retained").get<std::size_t>();
    const double conf = rec.at("confidence").get<double>();
    for (const auto& e : rec.at("examples")) {
      all.push_back({TrainingExample{e.at("input").get<std::string>(),
                                     e.at("output").get<std::string>(),
                                     e.at("format_id").get<int>(),
                                     rec.at("question_id").get<std::string>(),
                                     e.at("path_index").get<std::size_t>()},
                     conf});
    }
  }
  out.counts.examples_emitted = all.size();
  if (cfg.shuffle) {
    Rng rng(cfg.seed);
    seeded_shuffle(all, rng);
  }
  std::string full, plain;
  for (const auto& [e, conf] : all) {
    full += detail::example_record(e, conf).dump() + "\n";
    ordered_json p;
    p["input"] = e.input;
    p["output"] = e.output;
    plain += p.dump() + "\n";
  }
  out.export_path = run_dir / "exports" / "train.jsonl";
  out.plain_export_path = run_dir / "exports" / "train_plain.jsonl";
  write_file_atomic(out.export_path, full);
  write_file_atomic(out.plain_export_path, plain);

  const std::string ratio = format_ratio(cfg.formats);
  auto& man = out.run_manifest;
  man["config"] = cfg_json;
  man["backend_id"] = backend.id();
  ordered_json dsj = ordered_json::array();
  for (const auto& d : data.datasets)
    dsj.push_back({{"name", d.name}, {"digest", dataset_digest(d)}, {"questions", d.size()}});
  man["datasets"] = dsj;
  ordered_json counts;
  counts["questions"] = out.counts.questions;
  counts["questions_with_consensus"] = out.counts.questions_with_consensus;
  counts["paths_sampled"] = out.counts.paths_sampled;
  counts["paths_extracted"] = out.counts.paths_extracted;
  counts["paths_retained"] = out.counts.paths_retained;
  counts["examples_emitted"] = out.counts.examples_emitted;
  man["counts"] = counts;
  man["format_ratio"] = ratio;
  man["export"] = {{"path", "exports/train.jsonl"}, {"digest", sha256_file(out.export_path)},
                   {"plain_path", "exports/train_plain.jsonl"}};

  out.backend_calls = cached.misses();
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  out.run_stats["wall_clock_seconds"] = wall;
  out.run_stats["cache_hits"] = cached.hits();
  out.run_stats["cache_misses"] = cached.misses();
  out.run_stats["cache_hit_rate"] = cached.hit_rate();
  out.run_stats["backend_calls"] = cached.misses();
  out.run_stats["resumed_questions"] = resumed;

  out.finetune_manifest = make_finetune_manifest(run_dir, out.export_path, cfg.finetune, ratio);
  write_file_atomic(run_dir / "manifests" / "run_manifest.json", man.dump(2) + "\n");
  write_file_atomic(run_dir / "manifests" / "run_stats.json", out.run_stats.dump(2) + "\n");
  write_file_atomic(run_dir / "manifests" / "finetune_manifest.json",
                    out.finetune_manifest.dump(2) + "\n");
  return out;
}

}  // namespace selfimprove
