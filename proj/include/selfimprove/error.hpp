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
#include <utility>

namespace selfimprove {

// Malformed input files, duplicate ids, bad gold answers.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration value violates its invariant. `field` names the offender.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config error: " + field + ": " + what),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// The backend could not be reached after all retry attempts.
class TransportError : public std::runtime_error {
 public:
  TransportError(std::size_t attempts, const std::string& what)
      : std::runtime_error(what + " (after " + std::to_string(attempts) +
                           " attempt" + (attempts == 1 ? "" : "s") + ")"),
        attempts_(attempts) {}
  std::size_t attempts() const noexcept { return attempts_; }

 private:
  std::size_t attempts_;
};

// The mock backend has no scripted text for a prompt.
class FixtureMissError : public std::runtime_error {
 public:
  FixtureMissError(std::string prompt_hash, std::size_t index)
      : std::runtime_error("mock fixture has no text for prompt " +
                           prompt_hash + " at path index " +
                           std::to_string(index)),
        prompt_hash_(std::move(prompt_hash)) {}
  const std::string& prompt_hash() const noexcept { return prompt_hash_; }

 private:
  std::string prompt_hash_;
};

// Ground-truth answers were read inside an unsupervised stage.
class GoldAccessError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace selfimprove
