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

// Accuracy evaluation under standard prompting, greedy chain-of-thought and
// self-consistency, plus temperature and path-count sweeps.

#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfimprove/backend.hpp"
#include "selfimprove/consensus.hpp"
#include "selfimprove/corpus.hpp"
#include "selfimprove/prompting.hpp"

namespace selfimprove {

enum class EvalMethod { kStandard, kCotGreedy, kSelfConsistency };

inline std::string to_string(EvalMethod m) {
  switch (m) {
    case EvalMethod::kStandard: return "standard";
    case EvalMethod::kCotGreedy: return "cot_greedy";
    case EvalMethod::kSelfConsistency: return "self_consistency";
  }
  return "standard";
}

inline EvalMethod parse_method(std::string_view s) {
  if (s == "standard") return EvalMethod::kStandard;
  if (s == "cot_greedy" || s == "cot-greedy" || s == "cot") return EvalMethod::kCotGreedy;
  if (s == "self_consistency" || s == "self-consistency") return EvalMethod::kSelfConsistency;
  throw ConfigError("method", "unknown method '" + std::string(s) + "'");
}

struct QuestionOutcome {
  std::string id;
  std::optional<std::string> predicted;
  bool correct = false;
  bool tie = false;
  std::string note;  // backend failure, if any

  friend bool operator==(const QuestionOutcome&, const QuestionOutcome&) = default;
};

struct EvalReport {
  std::string dataset;
  EvalMethod method = EvalMethod::kCotGreedy;
  std::size_t m = 1;
  double temperature = 0.0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
  std::vector<QuestionOutcome> per_question;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalOptions {
  EvalMethod method = EvalMethod::kCotGreedy;
  std::size_t m = 1;
  double temperature = 0.0;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t max_in_flight = 8;
  std::int64_t seed = 0;
  std::vector<std::string> stop{"\nQ:"};
};

// With several templates, self-consistency path j is sampled from template
// j mod |templates|; the greedy methods use the first template.
inline EvalReport evaluate(const Dataset& ds, std::span<const PromptTemplate> templates,
                           Backend& backend, const EvalOptions& opts) {
  if (templates.empty()) throw std::invalid_argument("evaluate: no prompt template");
  const bool sc = opts.method == EvalMethod::kSelfConsistency;
  if (sc && opts.m < 1) throw ConfigError("m", "self-consistency needs m >= 1");
  if (sc && !(opts.temperature > 0.0))
    throw ConfigError("temperature", "self-consistency needs temperature > 0");
  for (const auto& q : ds.questions)
    if (!q.has_gold()) throw DataError("evaluation needs gold for '" + q.id + "'");

  const std::size_t m = sc ? opts.m : 1;
  const double temperature = sc ? opts.temperature : 0.0;
  const std::size_t n_tpl = sc ? std::min(templates.size(), m) : 1;

  // Requests are laid out question-major, template-minor.
  std::vector<CompletionRequest> reqs;
  reqs.reserve(ds.size() * n_tpl);
  for (const auto& q : ds.questions) {
    for (std::size_t t = 0; t < n_tpl; ++t) {
      const PromptTemplate tpl =
          opts.method == EvalMethod::kStandard ? to_standard(templates[t]) : templates[t];
      CompletionRequest r;
      r.prompt = render_prompt(tpl, q);
      r.temperature = temperature;
      r.max_tokens = opts.max_tokens;
      r.n_samples = m / n_tpl + (t < m % n_tpl ? 1 : 0);
      r.stop = opts.stop;
      r.seed = opts.seed;
      reqs.push_back(std::move(r));
    }
  }
  const auto slots = complete_batch(backend, reqs, opts.max_in_flight);

  EvalReport report;
  report.dataset = ds.name;
  report.method = opts.method;
  report.m = m;
  report.temperature = temperature;
  for (std::size_t qi = 0; qi < ds.size(); ++qi) {
    const Question& q = ds.questions[qi];
    QuestionOutcome out;
    out.id = q.id;
    std::vector<std::string> texts(m);
    for (std::size_t t = 0; t < n_tpl && out.note.empty(); ++t) {
      const BatchSlot& slot = slots[qi * n_tpl + t];
      if (!slot.ok()) {
        out.note = slot.error_message();
        break;
      }
      for (std::size_t k = 0; k < slot.texts.size(); ++k) texts[t + k * n_tpl] = slot.texts[k];
    }
    if (out.note.empty()) {
      const auto tally = tally_paths(q.id, q.schema, std::move(texts), temperature, backend.id());
      out.predicted = tally.consensus.answer;
      out.tie = tally.consensus.tie;
      out.correct = out.predicted && answers_equal(*out.predicted, *q.gold(), q.schema);
    }
    if (out.correct) ++report.n_correct;
    report.per_question.push_back(std::move(out));
  }
  report.accuracy = ds.empty() ? 0.0
                               : static_cast<double>(report.n_correct) /
                                     static_cast<double>(ds.size());
  return report;
}

inline EvalReport evaluate(const Dataset& ds, const PromptTemplate& tpl, Backend& backend,
                           const EvalOptions& opts) {
  return evaluate(ds, std::span<const PromptTemplate>(&tpl, 1), backend, opts);
}

enum class SweepAxis { kTemperature, kNumPaths };

inline SweepAxis parse_axis(std::string_view s) {
  if (s == "temperature") return SweepAxis::kTemperature;
  if (s == "n_paths" || s == "m") return SweepAxis::kNumPaths;
  throw ConfigError("axis", "unknown sweep axis '" + std::string(s) + "'");
}

// One self-consistency report per value of `axis`; everything else fixed.
inline std::vector<EvalReport> sweep(const Dataset& ds, std::span<const PromptTemplate> templates,
                                     Backend& backend, SweepAxis axis,
                                     const std::vector<double>& values, EvalOptions base) {
  if (values.empty()) throw ConfigError("values", "sweep needs at least one value");
  base.method = EvalMethod::kSelfConsistency;
  std::vector<EvalReport> reports;
  for (double v : values) {
    EvalOptions o = base;
    if (axis == SweepAxis::kTemperature) {
      o.temperature = v;
    } else {
      if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v)))
        throw ConfigError("values", "path counts must be positive integers");
      o.m = static_cast<std::size_t>(v);
    }
    reports.push_back(evaluate(ds, templates, backend, o));
  }
  return reports;
}

inline std::string eval_report_jsonl(const EvalReport& r) {
  std::vector<json> recs;
  recs.push_back({{"dataset", r.dataset}, {"method", to_string(r.method)}, {"m", r.m},
                  {"temperature", r.temperature}, {"n_correct", r.n_correct},
                  {"n_questions", r.per_question.size()}, {"accuracy", r.accuracy}});
  for (const auto& q : r.per_question) {
    json rec = {{"id", q.id}, {"correct", q.correct}, {"tie", q.tie}};
    rec["predicted"] = q.predicted ? json(*q.predicted) : json(nullptr);
    if (!q.note.empty()) rec["note"] = q.note;
    recs.push_back(std::move(rec));
  }
  return to_jsonl(recs);
}

// Method rows by dataset columns, accuracies in percent.
inline std::string eval_summary_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> datasets;
  for (const auto& r : reports)
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
      datasets.push_back(r.dataset);
  const std::pair<EvalMethod, const char*> rows[] = {
      {EvalMethod::kStandard, "Standard-Prompting"},
      {EvalMethod::kCotGreedy, "CoT-Prompting"},
      {EvalMethod::kSelfConsistency, "Self-Consistency"}};
  char cell[64];
  std::string out = "method              ";
  for (const auto& d : datasets) {
    std::snprintf(cell, sizeof cell, " %12.12s", d.c_str());
    out += cell;
  }
  out += '\n';
  for (const auto& [method, label] : rows) {
    bool any = false;
    std::string line;
    std::snprintf(cell, sizeof cell, "%-20s", label);
    line += cell;
    for (const auto& d : datasets) {
      const EvalReport* hit = nullptr;
      for (const auto& r : reports)
        if (r.dataset == d && r.method == method) hit = &r;
      if (hit) {
        any = true;
        std::snprintf(cell, sizeof cell, " %12.1f", 100.0 * hit->accuracy);
      } else {
        std::snprintf(cell, sizeof cell, " %12s", "-");
      }
      line += cell;
    }
    if (any) out += line + '\n';
  }
  return out;
}

inline std::string sweep_table(SweepAxis axis, const std::vector<EvalReport>& reports) {
  std::string out = axis == SweepAxis::kTemperature ? "temperature  accuracy\n"
                                                    : "paths        accuracy\n";
  char line[64];
  for (const auto& r : reports) {
    if (axis == SweepAxis::kTemperature)
      std::snprintf(line, sizeof line, "%-11.2f  %7.1f\n", r.temperature, 100.0 * r.accuracy);
    else
      std::snprintf(line, sizeof line, "%-11zu  %7.1f\n", r.m, 100.0 * r.accuracy);
    out += line;
  }
  return out;
}

}  // namespace selfimprove
