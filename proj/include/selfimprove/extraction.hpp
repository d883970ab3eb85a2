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

// Parsing "The answer is ..." out of generated text and reducing answers to
// a canonical, comparable form per task schema.

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "selfimprove/schema.hpp"

namespace selfimprove {

inline constexpr std::string_view kAnswerMarker = "the answer is";

struct ExtractedAnswer {
  std::string canonical;
  std::string raw_span;
  SchemaKind schema_kind = SchemaKind::kNumeric;

  friend bool operator==(const ExtractedAnswer&, const ExtractedAnswer&) = default;
};

namespace detail {

inline bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Builds the canonical decimal string from sign, integer and fraction digits.
inline std::string canonical_decimal(bool negative, std::string_view int_part,
                                     std::string_view frac_part) {
  while (int_part.size() > 1 && int_part.front() == '0') int_part.remove_prefix(1);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.remove_suffix(1);
  std::string out;
  const bool zero = (int_part.empty() || int_part == "0") && frac_part.empty();
  if (negative && !zero) out.push_back('-');
  out += int_part.empty() ? std::string_view("0") : int_part;
  if (!frac_part.empty()) {
    out.push_back('.');
    out += frac_part;
  }
  return out;
}

// Last signed decimal literal in `raw`, with digit-group commas removed.
inline std::optional<std::string> last_decimal_literal(std::string_view raw) {
  std::string s;
  s.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == ',' && i > 0 && i + 1 < raw.size() && is_digit(raw[i - 1]) &&
        is_digit(raw[i + 1]))
      continue;
    s.push_back(raw[i]);
  }
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < s.size()) {
    const bool starts_int = is_digit(s[i]);
    const bool starts_frac = s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1]) &&
                             (i == 0 || !is_digit(s[i - 1]));
    if (!starts_int && !starts_frac) {
      ++i;
      continue;
    }
    // A minus sign directly attached to the literal and not following an
    // operand ("5-3" is subtraction, "-3" and "= -3" are negative).
    bool negative = false;
    if (i > 0 && s[i - 1] == '-') {
      negative = i < 2 || !(is_alnum(s[i - 2]) || s[i - 2] == ')' || s[i - 2] == '.');
    }
    std::size_t j = i;
    while (j < s.size() && is_digit(s[j])) ++j;
    std::string_view int_part(s.data() + i, j - i);
    std::string_view frac_part;
    if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
      std::size_t k = j + 1;
      while (k < s.size() && is_digit(s[k])) ++k;
      frac_part = std::string_view(s.data() + j + 1, k - j - 1);
      j = k;
    }
    last = canonical_decimal(negative, int_part, frac_part);
    i = j;
  }
  return last;
}

// Position of the first word-bounded occurrence of `word` in `hay`.
inline std::size_t find_word(std::string_view hay, std::string_view word) {
  std::size_t pos = hay.find(word);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_alnum(hay[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= hay.size() || !is_alnum(hay[end]);
    if (left_ok && right_ok) return pos;
    pos = hay.find(word, pos + 1);
  }
  return std::string_view::npos;
}

inline std::optional<std::string> first_yes_no(std::string_view lowered) {
  const auto y = find_word(lowered, "yes");
  const auto n = find_word(lowered, "no");
  if (y == std::string_view::npos && n == std::string_view::npos) return std::nullopt;
  return y < n ? std::string("yes") : std::string("no");
}

inline std::optional<std::string> choice_letter(std::string_view raw,
                                                const TaskSchema& schema) {
  const std::string s = lower(raw);
  std::optional<char> letter;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    if (s[i] == '(' && std::isalpha(static_cast<unsigned char>(s[i + 1])) &&
        s[i + 2] == ')') {
      letter = s[i + 1];
      break;
    }
  }
  if (!letter) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!std::isalpha(static_cast<unsigned char>(s[i]))) continue;
      const bool left_ok = i == 0 || !is_alnum(s[i - 1]);
      const bool right_ok = i + 1 >= s.size() || !is_alnum(s[i + 1]);
      if (left_ok && right_ok) {
        letter = s[i];
        break;
      }
    }
  }
  if (!letter) return std::nullopt;
  std::string out(1, *letter);
  if (!schema.has_label(out)) return std::nullopt;
  return out;
}

}  // namespace detail

// Reduces a raw answer span to canonical form, or nullopt when the span
// holds no admissible answer for `schema`.
inline std::optional<std::string> normalize(std::string_view raw,
                                            const TaskSchema& schema) {
  switch (schema.kind) {
    case SchemaKind::kNumeric:
      return detail::last_decimal_literal(raw);
    case SchemaKind::kMultipleChoice:
      return detail::choice_letter(raw, schema);
    case SchemaKind::kNliLabel: {
      const std::string s = detail::lower(raw);
      // Longest label first: "not" must not be read as "no".
      if (s.find(kNliUnknown) != std::string::npos) return std::string(kNliUnknown);
      return detail::first_yes_no(s);
    }
    case SchemaKind::kYesNo:
      return detail::first_yes_no(detail::lower(raw));
  }
  return std::nullopt;
}

// Takes the clause after the last "The answer is" (any case) up to the end
// of its sentence and normalizes it.
inline std::optional<ExtractedAnswer> extract_answer(std::string_view text,
                                                     const TaskSchema& schema) {
  const std::string lowered = detail::lower(text);
  const std::size_t pos = lowered.rfind(kAnswerMarker);
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t start = pos + kAnswerMarker.size();
  std::size_t end = start;
  for (; end < text.size(); ++end) {
    const char c = text[end];
    if (c == '\n') break;
    if (c == '.' || c == '?' || c == '!') {
      if (end + 1 >= text.size() || detail::is_space(text[end + 1])) break;
    }
  }
  const std::string_view clause = detail::trim(text.substr(start, end - start));
  if (clause.empty()) return std::nullopt;
  auto canonical = normalize(clause, schema);
  if (!canonical) return std::nullopt;
  return ExtractedAnswer{std::move(*canonical), std::string(clause), schema.kind};
}

inline bool answers_equal(std::string_view a, std::string_view b,
                          const TaskSchema& schema) {
  if (schema.kind == SchemaKind::kNumeric) {
    const auto na = normalize(a, schema);
    const auto nb = normalize(b, schema);
    if (na && nb) return *na == *nb;
  }
  return a == b;
}

// The sentence a direct-answer training target or exemplar ends with.
inline std::string answer_sentence(std::string_view canonical, const TaskSchema& schema) {
  if (schema.kind == SchemaKind::kMultipleChoice)
    return "The answer is (" + std::string(canonical) + ").";
  return "The answer is " + std::string(canonical) + ".";
}

}  // namespace selfimprove
