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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfimprove/error.hpp"

namespace selfimprove {

enum class SchemaKind { kNumeric, kMultipleChoice, kNliLabel, kYesNo };

inline constexpr std::string_view kNliUnknown = "it is not possible to tell";

// How answers to a task are shaped and compared.
struct TaskSchema {
  SchemaKind kind = SchemaKind::kNumeric;
  // Canonical labels; empty for numeric. Multiple choice is "a", "b", ...
  std::vector<std::string> label_set;

  static TaskSchema numeric() { return {SchemaKind::kNumeric, {}}; }
  static TaskSchema nli_label() {
    return {SchemaKind::kNliLabel, {"yes", "no", std::string(kNliUnknown)}};
  }
  static TaskSchema yes_no() { return {SchemaKind::kYesNo, {"yes", "no"}}; }
  static TaskSchema multiple_choice(std::size_t n_choices) {
    if (n_choices == 0 || n_choices > 26)
      throw ConfigError("schema", "multiple choice needs 1..26 options");
    TaskSchema s{SchemaKind::kMultipleChoice, {}};
    for (std::size_t i = 0; i < n_choices; ++i)
      s.label_set.emplace_back(1, static_cast<char>('a' + i));
    return s;
  }

  bool has_label(std::string_view l) const {
    for (const auto& x : label_set)
      if (x == l) return true;
    return false;
  }

  friend bool operator==(const TaskSchema&, const TaskSchema&) = default;
};

inline std::string to_string(SchemaKind k) {
  switch (k) {
    case SchemaKind::kNumeric: return "numeric";
    case SchemaKind::kMultipleChoice: return "multiple_choice";
    case SchemaKind::kNliLabel: return "nli_label";
    case SchemaKind::kYesNo: return "yes_no";
  }
  return "numeric";
}

// "numeric", "nli_label", "yes_no", or "multiple_choice:<n>".
inline std::string to_string(const TaskSchema& s) {
  if (s.kind == SchemaKind::kMultipleChoice)
    return "multiple_choice:" + std::to_string(s.label_set.size());
  return to_string(s.kind);
}

inline TaskSchema parse_schema(std::string_view text) {
  if (text == "numeric") return TaskSchema::numeric();
  if (text == "nli_label" || text == "nli") return TaskSchema::nli_label();
  if (text == "yes_no") return TaskSchema::yes_no();
  constexpr std::string_view kMc = "multiple_choice:";
  if (text.substr(0, kMc.size()) == kMc) {
    std::size_t n = 0;
    try {
      n = std::stoul(std::string(text.substr(kMc.size())));
    } catch (const std::exception&) {
      throw ConfigError("schema", "bad choice count in '" + std::string(text) + "'");
    }
    return TaskSchema::multiple_choice(n);
  }
  throw ConfigError("schema", "unknown schema '" + std::string(text) + "'");
}

}  // namespace selfimprove
