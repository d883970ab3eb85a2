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

// Majority voting over extracted answers, the supporting-path filter, and
// confidence calibration analysis.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfimprove/error.hpp"
#include "selfimprove/extraction.hpp"
#include "selfimprove/jsonl.hpp"
#include "selfimprove/request.hpp"

namespace selfimprove {

struct PathAnswer {
  std::size_t path_index = 0;
  std::optional<std::string> canonical;  // nullopt when extraction failed
};

struct ConsensusResult {
  std::string question_id;
  std::optional<std::string> answer;
  std::size_t support_count = 0;
  std::size_t total_paths = 0;
  std::size_t extracted_paths = 0;
  double confidence = 0.0;  // support_count / total_paths
  bool tie = false;

  friend bool operator==(const ConsensusResult&, const ConsensusResult&) = default;
};

// Most frequent answer under answers_equal. Ties go to the answer whose
// earliest supporting path has the lowest index, and set `tie`.
inline ConsensusResult vote(const std::vector<PathAnswer>& answers, std::size_t m,
                            const TaskSchema& schema, std::string question_id = {}) {
  if (answers.size() != m)
    throw std::invalid_argument("vote: got " + std::to_string(answers.size()) +
                                " answers for m=" + std::to_string(m));
  struct Group {
    std::string answer;
    std::size_t count = 0;
    std::size_t first_index = 0;
  };
  std::vector<Group> groups;
  ConsensusResult r;
  r.question_id = std::move(question_id);
  r.total_paths = m;
  for (const auto& a : answers) {
    if (!a.canonical) continue;
    ++r.extracted_paths;
    Group* g = nullptr;
    for (auto& existing : groups) {
      if (answers_equal(existing.answer, *a.canonical, schema)) {
        g = &existing;
        break;
      }
    }
    if (g == nullptr) {
      groups.push_back({*a.canonical, 0, a.path_index});
      g = &groups.back();
    }
    ++g->count;
    g->first_index = std::min(g->first_index, a.path_index);
  }
  const Group* best = nullptr;
  for (const auto& g : groups) {
    if (best == nullptr || g.count > best->count ||
        (g.count == best->count && g.first_index < best->first_index))
      best = &g;
  }
  if (best == nullptr) return r;
  r.answer = best->answer;
  r.support_count = best->count;
  r.confidence = m == 0 ? 0.0 : static_cast<double>(best->count) / static_cast<double>(m);
  for (const auto& g : groups)
    if (&g != best && g.count == best->count) r.tie = true;
  return r;
}

// The paths whose extraction equals the consensus answer, in input order.
inline std::vector<SampledPath> filter_supporting_paths(
    const std::vector<SampledPath>& paths, const std::vector<PathAnswer>& extractions,
    const ConsensusResult& consensus, const TaskSchema& schema) {
  if (paths.size() != extractions.size())
    throw std::invalid_argument("filter_supporting_paths: paths and extractions differ in length");
  std::vector<SampledPath> kept;
  if (!consensus.answer) return kept;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& c = extractions[i].canonical;
    if (c && answers_equal(*c, *consensus.answer, schema)) kept.push_back(paths[i]);
  }
  return kept;
}

// Sampled texts of one question turned into paths, extractions and a vote.
struct QuestionTally {
  std::vector<SampledPath> paths;
  std::vector<PathAnswer> answers;
  ConsensusResult consensus;
};

inline QuestionTally tally_paths(const std::string& question_id, const TaskSchema& schema,
                                 std::vector<std::string> texts, double temperature,
                                 const std::string& backend_id) {
  QuestionTally t;
  t.paths.reserve(texts.size());
  t.answers.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto extracted = extract_answer(texts[i], schema);
    t.answers.push_back({i, extracted ? std::optional(std::move(extracted->canonical))
                                      : std::nullopt});
    t.paths.push_back({question_id, i, std::move(texts[i]), temperature, backend_id});
  }
  t.consensus = vote(t.answers, t.answers.size(), schema, question_id);
  return t;
}

struct CalibrationBucket {
  double confidence_lo = 0.0;
  double confidence_hi = 0.0;
  std::size_t n_questions = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;  // 0 for empty buckets

  double midpoint() const { return 0.5 * (confidence_lo + confidence_hi); }
};

// Equal-width confidence buckets over [0, 1]; confidence 1 falls in the top
// bucket. Analysis only: needs gold for every result.
inline std::vector<CalibrationBucket> calibration_histogram(
    const std::vector<ConsensusResult>& results,
    const std::map<std::string, std::string>& gold, std::size_t n_buckets,
    const TaskSchema& schema) {
  if (n_buckets < 1) throw std::invalid_argument("n_buckets must be >= 1");
  std::vector<CalibrationBucket> buckets(n_buckets);
  for (std::size_t b = 0; b < n_buckets; ++b) {
    buckets[b].confidence_lo = static_cast<double>(b) / static_cast<double>(n_buckets);
    buckets[b].confidence_hi = static_cast<double>(b + 1) / static_cast<double>(n_buckets);
  }
  for (const auto& r : results) {
    auto g = gold.find(r.question_id);
    if (g == gold.end()) throw DataError("no gold answer for '" + r.question_id + "'");
    // Integer arithmetic when the vote counts are known, so k/m on a bucket
    // edge never lands below it through rounding.
    auto b = r.total_paths > 0
                 ? r.support_count * n_buckets / r.total_paths
                 : static_cast<std::size_t>(std::floor(r.confidence * static_cast<double>(n_buckets)));
    b = std::min(b, n_buckets - 1);
    ++buckets[b].n_questions;
    if (r.answer && answers_equal(*r.answer, g->second, schema)) ++buckets[b].n_correct;
  }
  for (auto& b : buckets)
    if (b.n_questions > 0)
      b.accuracy = static_cast<double>(b.n_correct) / static_cast<double>(b.n_questions);
  return buckets;
}

inline std::string calibration_jsonl(const std::vector<CalibrationBucket>& buckets) {
  std::vector<json> recs;
  for (const auto& b : buckets)
    recs.push_back({{"confidence_lo", b.confidence_lo}, {"confidence_hi", b.confidence_hi},
                    {"n_questions", b.n_questions}, {"n_correct", b.n_correct},
                    {"accuracy", b.accuracy}});
  return to_jsonl(recs);
}

// Fixed-width text table; the bar column scales with bucket occupancy.
inline std::string calibration_table(const std::vector<CalibrationBucket>& buckets) {
  std::size_t max_n = 1;
  for (const auto& b : buckets) max_n = std::max(max_n, b.n_questions);
  std::string out = "confidence      questions  accuracy\n";
  char line[128];
  for (const auto& b : buckets) {
    std::snprintf(line, sizeof line, "[%.2f, %.2f%c  %9zu  %8.3f  ", b.confidence_lo,
                  b.confidence_hi, &b == &buckets.back() ? ']' : ')', b.n_questions,
                  b.accuracy);
    out += line;
    out += std::string(b.n_questions * 30 / max_n, '#');
    out += '\n';
  }
  return out;
}

}  // namespace selfimprove
