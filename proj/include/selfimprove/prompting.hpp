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

// Prompt assembly for the four prompting styles and the expansion of one
// retained reasoning path into four mixed-format training examples.

#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfimprove/corpus.hpp"
#include "selfimprove/error.hpp"
#include "selfimprove/extraction.hpp"
#include "selfimprove/jsonl.hpp"
#include "selfimprove/request.hpp"

#ifndef SELFIMPROVE_DATA_DIR
#define SELFIMPROVE_DATA_DIR "data"
#endif

namespace selfimprove {

inline constexpr std::string_view kStepByStep = "A: Let's think step by step.";

struct Exemplar {
  std::string question;
  std::string reasoning;  // may be empty
  std::string answer;     // canonical

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

enum class PromptStyle { kFewshotCot, kFewshotStandard, kZeroshotCot, kZeroshotDirect };

inline std::string to_string(PromptStyle s) {
  switch (s) {
    case PromptStyle::kFewshotCot: return "fewshot_cot";
    case PromptStyle::kFewshotStandard: return "fewshot_standard";
    case PromptStyle::kZeroshotCot: return "zeroshot_cot";
    case PromptStyle::kZeroshotDirect: return "zeroshot_direct";
  }
  return "fewshot_cot";
}

inline bool is_fewshot(PromptStyle s) {
  return s == PromptStyle::kFewshotCot || s == PromptStyle::kFewshotStandard;
}

struct PromptTemplate {
  PromptStyle style = PromptStyle::kZeroshotCot;
  std::vector<Exemplar> exemplars;
  // Rendered prompts longer than this are rejected; 0 disables the cap.
  std::size_t max_chars = 0;

  void validate() const {
    if (is_fewshot(style) && exemplars.empty())
      throw std::invalid_argument(to_string(style) + " template needs at least one exemplar");
    if (!is_fewshot(style) && !exemplars.empty())
      throw std::invalid_argument(to_string(style) + " template must not carry exemplars");
  }

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

struct TrainingExample {
  std::string input;
  std::string output;
  int format_id = 1;
  std::string question_id;
  std::size_t path_index = 0;

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

// The templates behind formats 1-4, in that order.
struct FormatTemplates {
  PromptTemplate fewshot_cot;
  PromptTemplate fewshot_standard;
  PromptTemplate zeroshot_cot{PromptStyle::kZeroshotCot, {}};
  PromptTemplate zeroshot_direct{PromptStyle::kZeroshotDirect, {}};
};

namespace detail {

// [begin, end) of the last "The answer is ..." sentence, terminator included.
inline std::pair<std::size_t, std::size_t> last_answer_sentence(std::string_view text) {
  const std::string lowered = lower(text);
  const std::size_t pos = lowered.rfind(kAnswerMarker);
  if (pos == std::string::npos) return {std::string_view::npos, std::string_view::npos};
  std::size_t end = pos + kAnswerMarker.size();
  for (; end < text.size(); ++end) {
    const char c = text[end];
    if (c == '\n') break;
    if ((c == '.' || c == '?' || c == '!') &&
        (end + 1 >= text.size() || is_space(text[end + 1]))) {
      ++end;
      break;
    }
  }
  return {pos, end};
}

}  // namespace detail

// Replaces the reasoning by its final "The answer is ..." sentence.
inline Exemplar strip_reasoning(const Exemplar& e) {
  const auto [begin, end] = detail::last_answer_sentence(e.reasoning);
  if (e.reasoning.empty() || begin == std::string_view::npos)
    throw DataError("exemplar reasoning has no answer sentence: '" + e.reasoning + "'");
  std::string sentence(detail::trim(std::string_view(e.reasoning).substr(begin, end - begin)));
  sentence[0] = 'T';
  return Exemplar{e.question, std::move(sentence), e.answer};
}

inline std::string render_prompt(const PromptTemplate& tpl, std::string_view question) {
  tpl.validate();
  std::string out;
  switch (tpl.style) {
    case PromptStyle::kFewshotCot:
    case PromptStyle::kFewshotStandard: {
      for (std::size_t i = 0; i < tpl.exemplars.size(); ++i) {
        const Exemplar& ex = tpl.exemplars[i];
        if (i > 0) out += '\n';
        out += "Q: ";
        out += ex.question;
        out += "\nA: ";
        if (tpl.style == PromptStyle::kFewshotCot || ex.reasoning.empty()) {
          out += ex.reasoning.empty() ? "The answer is " + ex.answer + "." : ex.reasoning;
        } else {
          out += strip_reasoning(ex).reasoning;
        }
      }
      out += '\n';
      out += question;
      out += "\nA:";
      break;
    }
    case PromptStyle::kZeroshotCot:
      out += question;
      out += '\n';
      out += kStepByStep;
      break;
    case PromptStyle::kZeroshotDirect:
      out += question;
      out += "\nA:";
      break;
  }
  if (tpl.max_chars > 0 && out.size() > tpl.max_chars)
    throw DataError("rendered prompt has " + std::to_string(out.size()) +
                    " chars, over the cap of " + std::to_string(tpl.max_chars));
  return out;
}

inline std::string render_prompt(const PromptTemplate& tpl, const Question& q) {
  return render_prompt(tpl, q.text);
}

// Builds the four format templates from a few-shot CoT exemplar bank; the
// standard exemplars are the same pairs with reasoning removed.
inline FormatTemplates make_format_templates(const std::vector<Exemplar>& cot_exemplars,
                                             std::size_t max_chars = 0) {
  FormatTemplates t;
  t.fewshot_cot = {PromptStyle::kFewshotCot, cot_exemplars, max_chars};
  t.fewshot_standard.style = PromptStyle::kFewshotStandard;
  t.fewshot_standard.max_chars = max_chars;
  for (const auto& e : cot_exemplars) t.fewshot_standard.exemplars.push_back(strip_reasoning(e));
  t.zeroshot_cot.max_chars = max_chars;
  t.zeroshot_direct.max_chars = max_chars;
  t.fewshot_cot.validate();
  t.fewshot_standard.validate();
  return t;
}

// Few-shot standard template for a few-shot CoT one; zero-shot direct for
// zero-shot CoT. Standard templates pass through.
inline PromptTemplate to_standard(const PromptTemplate& tpl) {
  switch (tpl.style) {
    case PromptStyle::kFewshotCot: {
      PromptTemplate out{PromptStyle::kFewshotStandard, {}, tpl.max_chars};
      for (const auto& e : tpl.exemplars) out.exemplars.push_back(strip_reasoning(e));
      return out;
    }
    case PromptStyle::kZeroshotCot:
      return {PromptStyle::kZeroshotDirect, {}, tpl.max_chars};
    default:
      return tpl;
  }
}

// Expands one consensus-supporting path into formats 1-4.
inline std::vector<TrainingExample> augment_path(const Question& q, const SampledPath& path,
                                                 std::string_view answer,
                                                 const FormatTemplates& templates) {
  const auto extracted = extract_answer(path.text, q.schema);
  if (!extracted || !answers_equal(extracted->canonical, answer, q.schema))
    throw std::invalid_argument("path " + std::to_string(path.path_index) + " of '" + q.id +
                                "' does not reach the answer " + std::string(answer));
  const std::string direct = answer_sentence(answer, q.schema);
  std::vector<TrainingExample> out;
  out.reserve(4);
  out.push_back({render_prompt(templates.fewshot_cot, q), path.text, 1, q.id, path.path_index});
  out.push_back({render_prompt(templates.fewshot_standard, q), direct, 2, q.id, path.path_index});
  out.push_back({render_prompt(templates.zeroshot_cot, q), path.text, 3, q.id, path.path_index});
  out.push_back({render_prompt(templates.zeroshot_direct, q), direct, 4, q.id, path.path_index});
  return out;
}

// ---------------------------------------------------------------------------
// Exemplar banks: records {id?, question, reasoning, answer}.

inline std::vector<Exemplar> load_exemplars(const std::filesystem::path& path,
                                            const TaskSchema& schema) {
  std::vector<Exemplar> out;
  for_each_record(path, [&](std::size_t line, const json& rec) {
    const std::string where = path.string() + ":" + std::to_string(line);
    auto q = detail::string_field(rec, "question", where);
    auto a = detail::string_field(rec, "answer", where);
    auto r = detail::string_field(rec, "reasoning", where);
    if (!q || !a) throw DataError(where + ": exemplar needs question and answer");
    auto canonical = normalize(*a, schema);
    if (!canonical) throw DataError(where + ": exemplar answer '" + *a + "' is not canonical");
    if (r && !r->empty()) {
      auto got = extract_answer(*r, schema);
      if (!got || !answers_equal(got->canonical, *canonical, schema))
        throw DataError(where + ": reasoning does not end with its answer sentence");
    }
    out.push_back({std::move(*q), r.value_or(""), std::move(*canonical)});
  });
  return out;
}

inline void save_exemplars(const std::filesystem::path& path,
                           const std::vector<Exemplar>& exemplars) {
  std::vector<json> recs;
  for (const auto& e : exemplars)
    recs.push_back({{"question", e.question}, {"reasoning", e.reasoning}, {"answer", e.answer}});
  write_file_atomic(path, to_jsonl(recs));
}

inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SELFIMPROVE_DATA_DIR"); env && *env) return env;
  return SELFIMPROVE_DATA_DIR;
}

struct BundledBank {
  std::string_view name;
  std::string_view schema;
};

// Prompt banks shipped under data/prompts/.
inline constexpr BundledBank kBundledBanks[] = {
    {"gsm8k", "numeric"},          {"svamp", "numeric"},
    {"drop_football", "numeric"},  {"drop_nonfootball", "numeric"},
    {"openbookqa", "multiple_choice:4"}, {"arc", "multiple_choice:4"},
    {"aqua", "multiple_choice:5"}, {"anli", "nli_label"},
    {"mnli", "nli_label"},         {"strategyqa", "yes_no"},
    {"rte", "yes_no"},
};

// A bundled bank name or a path to an exemplar file.
inline std::filesystem::path resolve_prompt_bank(const std::string& ref) {
  if (std::filesystem::exists(ref)) return ref;
  for (const auto& b : kBundledBanks)
    if (b.name == ref) return data_dir() / "prompts" / (ref + ".jsonl");
  throw ConfigError("prompts", "no such prompt bank '" + ref + "'");
}

}  // namespace selfimprove
