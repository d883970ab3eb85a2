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

// Question-only datasets: loading, subsetting, and the guard that keeps
// ground-truth answers out of unsupervised stages.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "selfimprove/digest.hpp"
#include "selfimprove/error.hpp"
#include "selfimprove/extraction.hpp"
#include "selfimprove/jsonl.hpp"
#include "selfimprove/random.hpp"
#include "selfimprove/schema.hpp"

namespace selfimprove {

namespace detail {
inline std::atomic<int> unsupervised_depth{0};
inline std::atomic<std::size_t> gold_reads_unsupervised{0};
}  // namespace detail

// While any instance is alive, reading Question::gold() is a violation: it
// is counted and throws GoldAccessError.
class UnsupervisedScope {
 public:
  UnsupervisedScope() { detail::unsupervised_depth.fetch_add(1); }
  ~UnsupervisedScope() { detail::unsupervised_depth.fetch_sub(1); }
  UnsupervisedScope(const UnsupervisedScope&) = delete;
  UnsupervisedScope& operator=(const UnsupervisedScope&) = delete;

  static bool active() { return detail::unsupervised_depth.load() > 0; }
};

// Number of gold reads attempted inside an UnsupervisedScope since start.
inline std::size_t gold_reads_in_unsupervised_scope() {
  return detail::gold_reads_unsupervised.load();
}

class Question {
 public:
  Question() = default;
  Question(std::string id, std::string text, TaskSchema schema,
           std::optional<std::string> partition_tag = std::nullopt,
           std::optional<std::string> gold = std::nullopt)
      : id(std::move(id)),
        text(std::move(text)),
        schema(std::move(schema)),
        partition_tag(std::move(partition_tag)),
        gold_(std::move(gold)) {}

  std::string id;
  std::string text;
  TaskSchema schema;
  std::optional<std::string> partition_tag;

  bool has_gold() const noexcept { return gold_.has_value(); }

  // Analysis only.
  const std::optional<std::string>& gold() const {
    if (UnsupervisedScope::active()) {
      detail::gold_reads_unsupervised.fetch_add(1);
      throw GoldAccessError("gold answer of '" + id +
                            "' read inside an unsupervised stage");
    }
    return gold_;
  }

  friend bool operator==(const Question& a, const Question& b) {
    return a.id == b.id && a.text == b.text && a.schema == b.schema &&
           a.partition_tag == b.partition_tag && a.gold_ == b.gold_;
  }

 private:
  std::optional<std::string> gold_;
};

struct Dataset {
  std::string name;
  std::vector<Question> questions;
  TaskSchema schema;

  std::size_t size() const noexcept { return questions.size(); }
  bool empty() const noexcept { return questions.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline std::optional<std::string> string_field(const json& rec, const char* key,
                                               const std::string& where) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (it->is_number()) return it->dump();
  throw DataError(where + ": field '" + key + "' must be a string");
}

}  // namespace detail

// Reads records {id?, question, answer?, partition?}. Missing ids become
// "<name>-<line>". `name` defaults to the file stem.
inline Dataset load_dataset(const std::filesystem::path& path, const TaskSchema& schema,
                            std::string name = {}) {
  Dataset ds;
  ds.name = name.empty() ? path.stem().string() : std::move(name);
  ds.schema = schema;
  std::unordered_set<std::string> seen;
  for_each_record(path, [&](std::size_t line, const json& rec) {
    const std::string where = path.string() + ":" + std::to_string(line);
    auto id = detail::string_field(rec, "id", where);
    auto text = detail::string_field(rec, "question", where);
    if (!text || detail::trim(*text).empty())
      throw DataError(where + ": record has no question text");
    if (!id) id = ds.name + "-" + std::to_string(line);
    if (!seen.insert(*id).second)
      throw DataError(where + ": duplicate id '" + *id + "'");
    std::optional<std::string> gold;
    if (auto raw = detail::string_field(rec, "answer", where)) {
      gold = normalize(*raw, schema);
      if (!gold)
        throw DataError(where + ": gold answer of '" + *id +
                        "' is not a valid " + to_string(schema) + " answer");
    }
    ds.questions.emplace_back(std::move(*id), std::move(*text), schema,
                              detail::string_field(rec, "partition", where),
                              std::move(gold));
  });
  return ds;
}

// n questions chosen by a seeded permutation, in their original order.
inline Dataset sample_subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n >= ds.size()) return ds;
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  seeded_shuffle(idx, rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Dataset out{ds.name, {}, ds.schema};
  out.questions.reserve(n);
  for (auto i : idx) out.questions.push_back(ds.questions[i]);
  return out;
}

// Digest of the question-only content (ids, texts, schema, partitions).
inline std::string dataset_digest(const Dataset& ds) {
  Sha256 h;
  h.update(ds.name).update("\x1f").update(to_string(ds.schema)).update("\x1e");
  for (const auto& q : ds.questions) {
    h.update(q.id).update("\x1f").update(q.text).update("\x1f");
    h.update(q.partition_tag.value_or("")).update("\x1e");
  }
  return h.hex();
}

}  // namespace selfimprove
