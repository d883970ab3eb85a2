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

// Model-written training questions and few-shot CoT prompt templates.

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfimprove/backend.hpp"
#include "selfimprove/consensus.hpp"
#include "selfimprove/corpus.hpp"
#include "selfimprove/prompting.hpp"
#include "selfimprove/random.hpp"

namespace selfimprove {

struct GeneratedQuestion {
  std::string text;
  std::vector<std::string> source_seed_ids;
  double confidence = 0.0;

  friend bool operator==(const GeneratedQuestion&, const GeneratedQuestion&) = default;
};

struct QuestionGenOptions {
  std::size_t k_concat = 4;
  std::size_t n_target = 0;
  std::uint64_t rng_seed = 0;
  std::size_t max_attempts = 0;  // 0 means 10 * n_target
  double temperature = 0.7;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t max_in_flight = 8;
};

struct QuestionGenResult {
  std::vector<GeneratedQuestion> questions;
  std::size_t attempts = 0;
  std::vector<std::string> warnings;
};

// The first question block of a continuation: up to the next "Q:"/"A:" line.
inline std::string first_question_block(std::string_view continuation) {
  std::string_view s = detail::trim(continuation);
  if (s.substr(0, 2) == "Q:") s = detail::trim(s.substr(2));
  std::size_t cut = s.size();
  for (std::string_view marker : {"\nQ:", "\nA:"}) cut = std::min(cut, s.find(marker));
  return std::string(detail::trim(s.substr(0, cut)));
}

// Repeatedly shows the model k_concat shuffled seed questions as "Q:"
// blocks and keeps the question it writes next. Seed copies and repeats are
// dropped; hitting the attempt cap returns what was found plus a warning.
inline QuestionGenResult generate_questions(const std::vector<Question>& seeds, Backend& backend,
                                            const QuestionGenOptions& opts) {
  if (opts.k_concat < 1) throw ConfigError("k_concat", "must be >= 1");
  if (seeds.size() < opts.k_concat)
    throw ConfigError("k_concat", "needs at least " + std::to_string(opts.k_concat) +
                                      " seed questions, got " + std::to_string(seeds.size()));
  QuestionGenResult result;
  if (opts.n_target == 0) return result;
  const std::size_t cap = opts.max_attempts > 0 ? opts.max_attempts : 10 * opts.n_target;

  std::set<std::string> seen;
  for (const auto& s : seeds) seen.insert(std::string(detail::trim(s.text)));
  Rng rng(opts.rng_seed);
  std::vector<std::size_t> order(seeds.size());

  while (result.questions.size() < opts.n_target && result.attempts < cap) {
    const std::size_t batch =
        std::min(opts.n_target - result.questions.size(), cap - result.attempts);
    std::vector<CompletionRequest> reqs;
    std::vector<std::vector<std::string>> sources;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      seeded_shuffle(order, rng);
      CompletionRequest r;
      std::vector<std::string> ids;
      for (std::size_t k = 0; k < opts.k_concat; ++k) {
        const Question& q = seeds[order[k]];
        r.prompt += "Q: " + q.text + "\n";
        ids.push_back(q.id);
      }
      r.prompt += "Q:";
      r.temperature = opts.temperature;
      r.max_tokens = opts.max_tokens;
      r.stop = {"\nQ:", "\nA:"};
      r.seed = static_cast<std::int64_t>(opts.rng_seed + result.attempts + b);
      reqs.push_back(std::move(r));
      sources.push_back(std::move(ids));
    }
    const auto slots = complete_batch(backend, reqs, opts.max_in_flight);
    result.attempts += batch;
    for (std::size_t b = 0; b < batch; ++b) {
      if (!slots[b].ok()) {
        result.warnings.push_back("question generation request failed: " +
                                  slots[b].error_message());
        continue;
      }
      std::string cand = first_question_block(slots[b].texts.front());
      if (cand.empty() || !seen.insert(cand).second) continue;
      if (result.questions.size() < opts.n_target)
        result.questions.push_back({std::move(cand), std::move(sources[b]), 0.0});
    }
  }
  if (result.questions.size() < opts.n_target)
    result.warnings.push_back("attempt cap of " + std::to_string(cap) + " reached with " +
                              std::to_string(result.questions.size()) + " of " +
                              std::to_string(opts.n_target) + " questions");
  return result;
}

struct ScreenOptions {
  std::size_t m = 32;
  double threshold = 0.6;
  double temperature = 0.7;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t max_in_flight = 8;
  std::int64_t seed = 0;
  // Defaults to zero-shot step-by-step when no exemplars are at hand.
  PromptTemplate tpl{PromptStyle::kZeroshotCot, {}};
  std::vector<std::string> stop{"\nQ:"};
};

// Keeps candidates whose self-consistency vote reaches `threshold`.
inline std::vector<GeneratedQuestion> screen_questions(const std::vector<GeneratedQuestion>& cands,
                                                       Backend& backend, const TaskSchema& schema,
                                                       const ScreenOptions& opts) {
  if (!(opts.threshold >= 0.0 && opts.threshold <= 1.0))
    throw ConfigError("threshold", "must lie in [0, 1]");
  if (opts.m < 1) throw ConfigError("m", "must be >= 1");
  std::vector<CompletionRequest> reqs;
  for (const auto& c : cands) {
    CompletionRequest r;
    r.prompt = render_prompt(opts.tpl, c.text);
    r.temperature = opts.temperature;
    r.max_tokens = opts.max_tokens;
    r.n_samples = opts.m;
    r.stop = opts.stop;
    r.seed = opts.seed;
    reqs.push_back(std::move(r));
  }
  const auto slots = complete_batch(backend, reqs, opts.max_in_flight);
  std::vector<GeneratedQuestion> kept;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (!slots[i].ok()) continue;
    const auto tally = tally_paths("gen-" + std::to_string(i), schema, slots[i].texts,
                                   opts.temperature, backend.id());
    if (!tally.consensus.answer || tally.consensus.confidence < opts.threshold) continue;
    GeneratedQuestion g = cands[i];
    g.confidence = tally.consensus.confidence;
    kept.push_back(std::move(g));
  }
  return kept;
}

struct GeneratedTemplateSet {
  std::vector<PromptTemplate> templates;
  std::size_t shots_per_template = 0;
  std::size_t n_templates = 0;
};

struct PromptGenOptions {
  std::size_t shots_per_template = 4;
  std::size_t n_templates = 20;
  std::uint64_t seed = 0;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t max_in_flight = 8;
};

// Greedy zero-shot step-by-step answers to randomly ordered questions; the
// generations that extract to an answer become exemplars, dealt into
// disjoint templates.
inline GeneratedTemplateSet generate_prompt_templates(const std::vector<Question>& questions,
                                                      Backend& backend,
                                                      const PromptGenOptions& opts) {
  if (opts.shots_per_template < 1) throw ConfigError("shots", "must be >= 1");
  if (opts.n_templates < 1) throw ConfigError("templates", "must be >= 1");
  const std::size_t need = opts.shots_per_template * opts.n_templates;
  if (questions.size() < need)
    throw ConfigError("templates", "need " + std::to_string(need) + " questions, got " +
                                       std::to_string(questions.size()));
  std::vector<std::size_t> order(questions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(opts.seed);
  seeded_shuffle(order, rng);

  const PromptTemplate zero_shot{PromptStyle::kZeroshotCot, {}};
  std::vector<Exemplar> valid;
  std::size_t next = 0;
  while (valid.size() < need && next < order.size()) {
    const std::size_t batch = std::min(need - valid.size(), order.size() - next);
    std::vector<CompletionRequest> reqs;
    for (std::size_t b = 0; b < batch; ++b) {
      CompletionRequest r;
      r.prompt = render_prompt(zero_shot, questions[order[next + b]]);
      r.temperature = 0.0;
      r.max_tokens = opts.max_tokens;
      r.stop = {"\nQ:"};
      reqs.push_back(std::move(r));
    }
    const auto slots = complete_batch(backend, reqs, opts.max_in_flight);
    for (std::size_t b = 0; b < batch; ++b) {
      if (!slots[b].ok()) continue;
      const Question& q = questions[order[next + b]];
      const std::string& text = slots[b].texts.front();
      auto got = extract_answer(text, q.schema);
      if (!got) continue;
      const auto [begin, end] = detail::last_answer_sentence(text);
      std::string reasoning(detail::trim(std::string_view(text).substr(0, end)));
      valid.push_back({q.text, std::move(reasoning), std::move(got->canonical)});
    }
    next += batch;
  }
  if (valid.size() < need)
    throw DataError("only " + std::to_string(valid.size()) + " valid exemplars, need " +
                    std::to_string(need) + " (short by " + std::to_string(need - valid.size()) +
                    ")");
  GeneratedTemplateSet set{{}, opts.shots_per_template, opts.n_templates};
  for (std::size_t t = 0; t < opts.n_templates; ++t) {
    PromptTemplate tpl{PromptStyle::kFewshotCot, {}};
    for (std::size_t s = 0; s < opts.shots_per_template; ++s)
      tpl.exemplars.push_back(valid[t * opts.shots_per_template + s]);
    set.templates.push_back(std::move(tpl));
  }
  return set;
}

// Records {template, question, reasoning, answer}.
inline std::string template_set_jsonl(const GeneratedTemplateSet& set) {
  std::vector<json> recs;
  for (std::size_t t = 0; t < set.templates.size(); ++t)
    for (const auto& e : set.templates[t].exemplars)
      recs.push_back({{"template", t}, {"question", e.question}, {"reasoning", e.reasoning},
                      {"answer", e.answer}});
  return to_jsonl(recs);
}

inline std::vector<PromptTemplate> load_template_set(const std::filesystem::path& path,
                                                     const TaskSchema& schema) {
  std::map<std::size_t, PromptTemplate> by_index;
  for_each_record(path, [&](std::size_t line, const json& rec) {
    const std::string where = path.string() + ":" + std::to_string(line);
    if (!rec.contains("template") || !rec.contains("question") || !rec.contains("answer"))
      throw DataError(where + ": template record needs template, question and answer");
    auto canonical = normalize(rec.at("answer").get<std::string>(), schema);
    if (!canonical) throw DataError(where + ": answer is not canonical");
    auto& tpl = by_index[rec.at("template").get<std::size_t>()];
    tpl.style = PromptStyle::kFewshotCot;
    tpl.exemplars.push_back({rec.at("question").get<std::string>(),
                             rec.value("reasoning", std::string()), std::move(*canonical)});
  });
  std::vector<PromptTemplate> out;
  for (auto& [_, t] : by_index) out.push_back(std::move(t));
  return out;
}

inline std::string generated_questions_jsonl(const std::vector<GeneratedQuestion>& qs) {
  std::vector<json> recs;
  for (std::size_t i = 0; i < qs.size(); ++i)
    recs.push_back({{"id", "gen-" + std::to_string(i + 1)}, {"question", qs[i].text},
                    {"source_seed_ids", qs[i].source_seed_ids},
                    {"confidence", qs[i].confidence}});
  return to_jsonl(recs);
}

}  // namespace selfimprove
