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

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace selfimprove {

inline constexpr std::size_t kDefaultMaxTokens = 256;

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t n_samples = 1;
  std::vector<std::string> stop;
  std::int64_t seed = 0;
  // Backend-specific sampling knobs (top_p, top_k, ...) forwarded verbatim.
  nlohmann::json options = nlohmann::json::object();
};

// One generated reasoning text for a question.
struct SampledPath {
  std::string question_id;
  std::size_t path_index = 0;
  std::string text;
  double temperature = 0.0;
  std::string backend_id;

  friend bool operator==(const SampledPath&, const SampledPath&) = default;
};

}  // namespace selfimprove
