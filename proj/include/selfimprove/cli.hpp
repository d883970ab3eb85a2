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

// Command-line front end. Exit codes: 0 ok, 1 usage or data error,
// 2 configuration error, 3 backend exhausted.

#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "selfimprove/evalharness.hpp"
#include "selfimprove/pipeline.hpp"
#include "selfimprove/selfgen.hpp"

namespace selfimprove::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;

namespace detail {

struct CommonFlags {
  std::string config;
  std::string run_dir = "runs/default";
  std::vector<std::string> datasets;
  std::optional<std::string> schema;
  std::optional<std::string> prompts;
  std::optional<std::size_t> subset;
  std::optional<std::string> backend;
  std::optional<std::string> fixture;
  std::optional<std::string> url;
  std::optional<std::string> dialect;
  std::optional<std::string> model;
  std::optional<std::size_t> max_in_flight;
  std::optional<std::uint64_t> seed;
  std::optional<long long> m;
  std::optional<double> temperature;
  std::optional<std::size_t> max_tokens;
  std::optional<std::string> preset;
  bool dry_run = false;
};

inline void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON run configuration file");
  sub->add_option("--run", f.run_dir, "Run directory")->capture_default_str();
  sub->add_option("--dataset", f.datasets, "Line-delimited question file (repeatable)");
  sub->add_option("--schema", f.schema,
                  "numeric | multiple_choice:<n> | nli_label | yes_no");
  sub->add_option("--prompts", f.prompts, "Bundled prompt bank name or exemplar file");
  sub->add_option("--subset", f.subset, "Use a seeded subset of this many questions");
  sub->add_option("--backend", f.backend, "mock | http");
  sub->add_option("--fixture", f.fixture, "Mock fixture file");
  sub->add_option("--url", f.url, "Completion endpoint URL");
  sub->add_option("--dialect", f.dialect, "native | openai");
  sub->add_option("--model", f.model, "Model name sent to the endpoint");
  sub->add_option("--max-in-flight", f.max_in_flight, "Concurrent backend requests");
  sub->add_option("--seed", f.seed, "Random seed");
  sub->add_option("--m", f.m, "Sampled paths per question");
  sub->add_option("--temperature", f.temperature, "Sampling temperature");
  sub->add_option("--max-tokens", f.max_tokens, "Decode length cap");
  sub->add_option("--preset", f.preset, "Named settings bundle (default, ul2)");
  sub->add_flag("--dry-run", f.dry_run, "Print the planned request count and exit");
}

// Config file first, then flags.
inline RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = load_config(f.config);
  if (f.preset) apply_preset(cfg, *f.preset);
  if (!f.datasets.empty()) {
    cfg.datasets.clear();
    for (const auto& path : f.datasets) {
      DatasetRef r;
      r.path = path;
      r.schema = parse_schema(f.schema.value_or("numeric"));
      r.prompts = f.prompts.value_or(std::filesystem::path(path).stem().string());
      r.subset = f.subset;
      cfg.datasets.push_back(std::move(r));
    }
  } else {
    for (auto& r : cfg.datasets) {
      if (f.schema) r.schema = parse_schema(*f.schema);
      if (f.prompts) r.prompts = *f.prompts;
      if (f.subset) r.subset = f.subset;
    }
  }
  if (f.m) {
    if (*f.m < 1) throw ConfigError("m", "must be >= 1");
    cfg.m = static_cast<std::size_t>(*f.m);
  }
  if (f.max_tokens) cfg.max_tokens = *f.max_tokens;
  if (f.seed) cfg.seed = *f.seed;
  if (f.max_in_flight) cfg.max_in_flight = *f.max_in_flight;
  if (f.backend) cfg.backend.kind = *f.backend;
  if (f.fixture) cfg.backend.fixture = *f.fixture;
  if (f.url) cfg.backend.url = *f.url;
  if (f.dialect) cfg.backend.dialect = *f.dialect;
  if (f.model) cfg.backend.model = *f.model;
  return cfg;
}

inline std::string summarize(const StageCounts& c) {
  std::ostringstream os;
  os << "questions " << c.questions << ", with consensus " << c.questions_with_consensus
     << ", paths sampled " << c.paths_sampled << ", extracted " << c.paths_extracted
     << ", retained " << c.paths_retained << ", examples " << c.examples_emitted;
  return os.str();
}

inline std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("values", "not a number: '" + item + "'");
    }
  }
  return out;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  using detail::CommonFlags;
  CLI::App app{"Self-improvement data pipeline: sample, vote, augment, export"};
  app.require_subcommand(1);

  CommonFlags gen_f, eval_f, sweep_f, gq_f, gp_f, cal_f;

  auto* gen = app.add_subcommand("generate", "Build a self-training dataset");
  detail::add_common(gen, gen_f);
  std::string formats_s;
  std::optional<double> min_conf;
  bool shuffle = false, fresh = false;
  gen->add_option("--formats", formats_s, "Comma-separated format ids, e.g. 1,2,3,4");
  gen->add_option("--min-confidence", min_conf, "Drop questions below this confidence");
  gen->add_flag("--shuffle", shuffle, "Shuffle the export with the run seed");
  gen->add_flag("--fresh", fresh, "Ignore checkpoints (the cache is kept)");

  auto* ev = app.add_subcommand("eval", "Evaluate a backend on a labeled dataset");
  detail::add_common(ev, eval_f);
  std::string method_s = "cot_greedy";
  std::string template_set;
  ev->add_option("--method", method_s, "standard | cot_greedy | self_consistency")
      ->capture_default_str();
  ev->add_option("--template-set", template_set, "Generated template set file");

  auto* sw = app.add_subcommand("sweep", "Self-consistency over a temperature or path grid");
  detail::add_common(sw, sweep_f);
  std::string axis_s = "temperature", values_s = "0.7,1.0,1.2,1.5";
  sw->add_option("--axis", axis_s, "temperature | n_paths")->capture_default_str();
  sw->add_option("--values", values_s, "Comma-separated grid")->capture_default_str();

  auto* gq = app.add_subcommand("gen-questions", "Generate and screen new questions");
  detail::add_common(gq, gq_f);
  std::size_t k_concat = 4, n_target = 100, max_attempts = 0;
  double threshold = 0.6;
  gq->add_option("--k", k_concat, "Seed questions per prompt")->capture_default_str();
  gq->add_option("--n-target", n_target, "Candidates to generate")->capture_default_str();
  gq->add_option("--max-attempts", max_attempts, "Attempt cap (0: 10 x n-target)");
  gq->add_option("--threshold", threshold, "Screening confidence threshold")
      ->capture_default_str();

  auto* gp = app.add_subcommand("gen-prompts", "Generate few-shot CoT templates");
  detail::add_common(gp, gp_f);
  std::size_t shots = 4, n_templates = 20;
  gp->add_option("--shots", shots, "Exemplars per template")->capture_default_str();
  gp->add_option("--templates", n_templates, "Number of templates")->capture_default_str();

  auto* cal = app.add_subcommand("calibrate", "Confidence vs accuracy histogram");
  detail::add_common(cal, cal_f);
  std::size_t buckets = 10;
  cal->add_option("--buckets", buckets, "Equal-width confidence buckets")->capture_default_str();

  auto* em = app.add_subcommand("export-manifest", "Write a fine-tuning manifest for an export");
  std::string em_run = "runs/default", em_export, em_out, em_config;
  FinetuneSettings ft;
  em->add_option("--config", em_config, "JSON run configuration file");
  em->add_option("--run", em_run, "Run directory")->capture_default_str();
  em->add_option("--export", em_export, "Export file (default <run>/exports/train.jsonl)");
  em->add_option("--out", em_out, "Manifest path (default <run>/manifests/finetune_manifest.json)");
  std::optional<std::size_t> em_steps, em_batch;
  std::optional<double> em_lr;
  em->add_option("--steps", em_steps, "Training steps");
  em->add_option("--lr", em_lr, "Learning rate");
  em->add_option("--batch-size", em_batch, "Batch size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) {
      RunConfig cfg = detail::resolve_config(gen_f);
      if (gen_f.temperature) cfg.gen_temperature = *gen_f.temperature;
      if (!formats_s.empty()) {
        cfg.formats.clear();
        for (double v : detail::parse_values(formats_s)) cfg.formats.push_back(static_cast<int>(v));
      }
      if (min_conf) cfg.min_confidence = *min_conf;
      if (shuffle) cfg.shuffle = true;
      cfg.validate();
      if (gen_f.dry_run) {
        const auto plan = plan_run(cfg);
        out << "planned: " << plan.questions << " questions, " << plan.requests
            << " requests, " << plan.samples << " samples\n";
        return kExitOk;
      }
      auto backend = make_backend(cfg.backend);
      const auto res = run_selfimprove(cfg, *backend, gen_f.run_dir, {.resume = !fresh});
      out << detail::summarize(res.counts) << "\n";
      out << "export: " << res.export_path.string() << "\n";
      return kExitOk;
    }

    if (*ev || *sw || *cal) {
      const CommonFlags& f = *ev ? eval_f : (*sw ? sweep_f : cal_f);
      RunConfig cfg = detail::resolve_config(f);
      cfg.validate();
      const auto data = prepare_data(cfg);
      const fs::path run_dir = f.run_dir;
      fs::create_directories(run_dir / "reports");
      EvalOptions eo;
      eo.max_tokens = cfg.max_tokens;
      eo.max_in_flight = cfg.max_in_flight;
      eo.seed = static_cast<std::int64_t>(cfg.seed);
      eo.stop = cfg.stop;
      eo.m = cfg.m;
      eo.temperature = f.temperature.value_or(cfg.eval_temperature_post);
      if (*ev) eo.method = parse_method(method_s);
      const auto method = *ev ? eo.method : EvalMethod::kSelfConsistency;

      std::vector<std::vector<PromptTemplate>> tpls;
      for (std::size_t d = 0; d < data.datasets.size(); ++d) {
        if (!template_set.empty())
          tpls.push_back(load_template_set(template_set, data.datasets[d].schema));
        else
          tpls.push_back({data.templates[d].fewshot_cot});
      }
      if (f.dry_run) {
        std::size_t requests = 0, samples = 0;
        std::size_t runs = 1;
        std::vector<double> values;
        if (*sw) values = detail::parse_values(values_s), runs = values.size();
        for (std::size_t d = 0; d < data.datasets.size(); ++d) {
          for (std::size_t r = 0; r < runs; ++r) {
            std::size_t m = method == EvalMethod::kSelfConsistency ? eo.m : 1;
            if (*sw && parse_axis(axis_s) == SweepAxis::kNumPaths)
              m = static_cast<std::size_t>(values[r]);
            const std::size_t per_q =
                method == EvalMethod::kSelfConsistency ? std::min(tpls[d].size(), m) : 1;
            requests += data.datasets[d].size() * per_q;
            samples += data.datasets[d].size() * m;
          }
        }
        out << "planned: " << requests << " requests, " << samples << " samples\n";
        return kExitOk;
      }
      auto backend = make_backend(cfg.backend);
      CachingBackend cached(*backend, run_dir / "cache");

      if (*cal) {
        for (const auto& ds : data.datasets) {
          std::vector<CompletionRequest> reqs;
          for (const auto& q : ds.questions) {
            CompletionRequest r;
            r.prompt = render_prompt(tpls.front().front(), q);
            r.temperature = f.temperature.value_or(cfg.gen_temperature);
            r.max_tokens = cfg.max_tokens;
            r.n_samples = cfg.m;
            r.stop = cfg.stop;
            r.seed = static_cast<std::int64_t>(cfg.seed);
            reqs.push_back(std::move(r));
          }
          const auto slots = complete_batch(cached, reqs, cfg.max_in_flight);
          std::vector<ConsensusResult> results;
          std::map<std::string, std::string> gold;
          for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto& q = ds.questions[i];
            if (!q.has_gold()) throw DataError("calibration needs gold for '" + q.id + "'");
            gold[q.id] = *q.gold();
            if (!slots[i].ok()) std::rethrow_exception(slots[i].error);
            results.push_back(tally_paths(q.id, q.schema, slots[i].texts,
                                          reqs[i].temperature, cached.id())
                                  .consensus);
          }
          const auto hist = calibration_histogram(results, gold, buckets, ds.schema);
          const auto table = calibration_table(hist);
          write_file_atomic(run_dir / "reports" / ("calibration_" + ds.name + ".jsonl"),
                            calibration_jsonl(hist));
          write_file_atomic(run_dir / "reports" / ("calibration_" + ds.name + ".txt"), table);
          out << ds.name << "\n" << table;
        }
        return kExitOk;
      }

      std::vector<EvalReport> reports;
      for (std::size_t d = 0; d < data.datasets.size(); ++d) {
        const auto& ds = data.datasets[d];
        if (*ev) {
          auto rep = evaluate(ds, tpls[d], cached, eo);
          write_file_atomic(
              run_dir / "reports" / ("eval_" + ds.name + "_" + to_string(rep.method) + ".jsonl"),
              eval_report_jsonl(rep));
          reports.push_back(std::move(rep));
        } else {
          const auto axis = parse_axis(axis_s);
          auto reps = sweep(ds, tpls[d], cached, axis, detail::parse_values(values_s), eo);
          std::string all;
          for (const auto& r : reps) all += eval_report_jsonl(r);
          const std::string stem = "sweep_" + ds.name + "_" + axis_s;
          write_file_atomic(run_dir / "reports" / (stem + ".jsonl"), all);
          write_file_atomic(run_dir / "reports" / (stem + ".txt"), sweep_table(axis, reps));
          out << ds.name << "\n" << sweep_table(axis, reps);
        }
      }
      if (*ev) {
        const auto table = eval_summary_table(reports);
        write_file_atomic(run_dir / "reports" / "eval_summary.txt", table);
        out << table;
      }
      return kExitOk;
    }

    if (*gq || *gp) {
      const CommonFlags& f = *gq ? gq_f : gp_f;
      RunConfig cfg = detail::resolve_config(f);
      cfg.validate();
      const auto data = prepare_data(cfg);
      std::vector<Question> pool;
      for (const auto& ds : data.datasets)
        pool.insert(pool.end(), ds.questions.begin(), ds.questions.end());
      const fs::path run_dir = f.run_dir;
      fs::create_directories(run_dir);
      if (f.dry_run) {
        if (*gq)
          out << "planned: up to " << (max_attempts ? max_attempts : 10 * n_target)
              << " generation requests, then one screening request per candidate\n";
        else
          out << "planned: at least " << shots * n_templates << " requests\n";
        return kExitOk;
      }
      auto backend = make_backend(cfg.backend);
      CachingBackend cached(*backend, run_dir / "cache");
      if (*gq) {
        QuestionGenOptions o;
        o.k_concat = k_concat;
        o.n_target = n_target;
        o.rng_seed = cfg.seed;
        o.max_attempts = max_attempts;
        o.temperature = f.temperature.value_or(cfg.gen_temperature);
        o.max_tokens = cfg.max_tokens;
        o.max_in_flight = cfg.max_in_flight;
        auto gen_res = generate_questions(pool, cached, o);
        for (const auto& w : gen_res.warnings) err << "warning: " << w << "\n";
        ScreenOptions so;
        so.m = cfg.m;
        so.threshold = threshold;
        so.temperature = o.temperature;
        so.max_tokens = cfg.max_tokens;
        so.max_in_flight = cfg.max_in_flight;
        so.seed = static_cast<std::int64_t>(cfg.seed);
        so.tpl = data.templates.front().fewshot_cot;
        const auto kept =
            screen_questions(gen_res.questions, cached, data.datasets.front().schema, so);
        write_file_atomic(run_dir / "generated_questions.jsonl", generated_questions_jsonl(kept));
        out << "generated " << gen_res.questions.size() << " candidates, kept " << kept.size()
            << "\n";
      } else {
        PromptGenOptions o;
        o.shots_per_template = shots;
        o.n_templates = n_templates;
        o.seed = cfg.seed;
        o.max_tokens = cfg.max_tokens;
        o.max_in_flight = cfg.max_in_flight;
        const auto set = generate_prompt_templates(pool, cached, o);
        write_file_atomic(run_dir / "generated_templates.jsonl", template_set_jsonl(set));
        out << "generated " << set.templates.size() << " templates, "
            << set.templates.size() * set.shots_per_template << " exemplars\n";
      }
      return kExitOk;
    }

    if (*em) {
      FinetuneSettings s;
      if (!em_config.empty()) s = load_config(em_config).finetune;
      if (em_steps) s.steps = *em_steps;
      if (em_lr) s.learning_rate = *em_lr;
      if (em_batch) s.batch_size = *em_batch;
      const fs::path run_dir = em_run;
      const fs::path export_path =
          em_export.empty() ? run_dir / "exports" / "train.jsonl" : fs::path(em_export);
      if (!fs::exists(export_path)) throw DataError("no export file at " + export_path.string());
      const auto man = make_finetune_manifest(run_dir, export_path, s);
      const fs::path dest =
          em_out.empty() ? run_dir / "manifests" / "finetune_manifest.json" : fs::path(em_out);
      write_file_atomic(dest, man.dump(2) + "\n");
      out << man.dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kExitConfig;
  } catch (const TransportError& e) {
    err << "backend exhausted: " << e.what() << "\n";
    return kExitBackend;
  } catch (const FixtureMissError& e) {
    err << "backend failure: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace selfimprove::cli
