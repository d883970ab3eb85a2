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

// The completion interface shared by every model backend, plus the scripted
// mock, the on-disk response cache, and bounded-parallel batch execution.

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "selfimprove/digest.hpp"
#include "selfimprove/error.hpp"
#include "selfimprove/jsonl.hpp"
#include "selfimprove/request.hpp"

namespace selfimprove {

// Cuts `text` before the earliest occurrence of any stop sequence.
inline std::string truncate_at_stop(std::string text, const std::vector<std::string>& stop) {
  std::size_t cut = text.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  text.resize(cut);
  return text;
}

inline void validate_request(const CompletionRequest& req) {
  if (req.n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (!(req.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (req.max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
}

// Content digest over every request field and the backend identity.
inline std::string cache_key(const CompletionRequest& req, std::string_view backend_id) {
  const json j = {{"backend", backend_id},   {"prompt", req.prompt},
                  {"temperature", req.temperature}, {"max_tokens", req.max_tokens},
                  {"n", req.n_samples},      {"stop", req.stop},
                  {"seed", req.seed},        {"options", req.options}};
  return sha256_hex(j.dump());
}

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string id() const = 0;

  // Exactly req.n_samples texts, each cut at its first stop sequence.
  // Thread-safe.
  std::vector<std::string> complete(const CompletionRequest& req) {
    validate_request(req);
    auto texts = do_complete(req);
    if (texts.size() != req.n_samples)
      throw std::runtime_error(id() + " returned " + std::to_string(texts.size()) +
                               " texts for n=" + std::to_string(req.n_samples));
    for (auto& t : texts) t = truncate_at_stop(std::move(t), req.stop);
    return texts;
  }

 protected:
  virtual std::vector<std::string> do_complete(const CompletionRequest& req) = 0;
};

// Replays fixture texts keyed by (prompt hash, path index). Sampling
// parameters are ignored, so every call with the same prompt is identical.
class MockBackend : public Backend {
 public:
  MockBackend() = default;
  MockBackend(MockBackend&& other) noexcept
      : fixtures_(std::move(other.fixtures_)), calls_(other.calls_.load()) {}

  // Records {"prompt": ...} or {"prompt_hash": ...} with "texts": [...].
  static MockBackend from_file(const std::filesystem::path& path) {
    MockBackend m;
    for_each_record(path, [&](std::size_t line, const json& rec) {
      std::string hash;
      if (auto it = rec.find("prompt_hash"); it != rec.end() && it->is_string())
        hash = it->get<std::string>();
      else if (auto p = rec.find("prompt"); p != rec.end() && p->is_string())
        hash = sha256_hex(p->get<std::string>());
      else
        throw DataError(path.string() + ":" + std::to_string(line) +
                        ": fixture record needs prompt or prompt_hash");
      auto t = rec.find("texts");
      if (t == rec.end() || !t->is_array())
        throw DataError(path.string() + ":" + std::to_string(line) +
                        ": fixture record needs a texts array");
      m.add_hashed(hash, t->get<std::vector<std::string>>());
    });
    return m;
  }

  void add(const std::string& prompt, std::vector<std::string> texts) {
    add_hashed(sha256_hex(prompt), std::move(texts));
  }
  void add_hashed(const std::string& hash, std::vector<std::string> texts) {
    std::lock_guard lock(id_mu_);
    id_.clear();
    auto& slot = fixtures_[hash];
    slot.insert(slot.end(), std::make_move_iterator(texts.begin()),
                std::make_move_iterator(texts.end()));
  }

  std::string id() const override {
    std::lock_guard lock(id_mu_);
    if (!id_.empty()) return id_;
    Sha256 h;
    for (const auto& [k, v] : fixtures_) {
      h.update(k);
      for (const auto& t : v) h.update("\x1f").update(t);
      h.update("\x1e");
    }
    id_ = "mock:" + h.hex().substr(0, 16);
    return id_;
  }

  std::size_t calls() const { return calls_.load(); }

 protected:
  std::vector<std::string> do_complete(const CompletionRequest& req) override {
    calls_.fetch_add(1);
    const std::string hash = sha256_hex(req.prompt);
    auto it = fixtures_.find(hash);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < req.n_samples; ++i) {
      if (it == fixtures_.end() || i >= it->second.size()) throw FixtureMissError(hash, i);
      out.push_back(it->second[i]);
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> fixtures_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex id_mu_;
  mutable std::string id_;
};

// Backend driven by a callable; used for synthetic generators in tests and
// dry runs.
class ScriptedBackend : public Backend {
 public:
  using Script = std::function<std::vector<std::string>(const CompletionRequest&)>;

  ScriptedBackend(std::string id, Script script)
      : id_(std::move(id)), script_(std::move(script)) {}

  std::string id() const override { return id_; }
  std::size_t calls() const { return calls_.load(); }

 protected:
  std::vector<std::string> do_complete(const CompletionRequest& req) override {
    calls_.fetch_add(1);
    return script_(req);
  }

 private:
  std::string id_;
  Script script_;
  std::atomic<std::size_t> calls_{0};
};

// Content-addressed response cache: <dir>/<cache_key>. Writes are atomic.
class CachingBackend : public Backend {
 public:
  CachingBackend(Backend& inner, std::filesystem::path dir)
      : inner_(inner), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::string id() const override { return inner_.id(); }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  double hit_rate() const {
    const double total = static_cast<double>(hits() + misses());
    return total == 0 ? 0.0 : static_cast<double>(hits()) / total;
  }
  const std::filesystem::path& dir() const { return dir_; }

 protected:
  std::vector<std::string> do_complete(const CompletionRequest& req) override {
    const auto path = dir_ / cache_key(req, inner_.id());
    if (std::filesystem::exists(path)) {
      try {
        auto j = json::parse(read_file(path));
        auto texts = j.at("texts").get<std::vector<std::string>>();
        if (texts.size() == req.n_samples) {
          hits_.fetch_add(1);
          return texts;
        }
      } catch (const std::exception&) {
        // Unreadable entry: fall through and overwrite it.
      }
    }
    misses_.fetch_add(1);
    auto texts = inner_.complete(req);
    write_file_atomic(path, json{{"texts", texts}}.dump());
    return texts;
  }

 private:
  Backend& inner_;
  std::filesystem::path dir_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// Outcome of one request in a batch.
struct BatchSlot {
  std::vector<std::string> texts;
  std::exception_ptr error;

  bool ok() const { return error == nullptr; }
  std::string error_message() const {
    if (!error) return {};
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      return e.what();
    } catch (...) {
      return "unknown error";
    }
  }
};

// Runs every request with at most `max_in_flight` outstanding at once.
// Slot i holds the result of reqs[i]; failures stay in their slot.
inline std::vector<BatchSlot> complete_batch(Backend& backend,
                                             const std::vector<CompletionRequest>& reqs,
                                             std::size_t max_in_flight) {
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  std::vector<BatchSlot> slots(reqs.size());
  auto run_one = [&](std::size_t i) {
    try {
      slots[i].texts = backend.complete(reqs[i]);
    } catch (...) {
      slots[i].error = std::current_exception();
    }
  };
  const std::size_t workers = std::min(max_in_flight, reqs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < reqs.size(); ++i) run_one(i);
    return slots;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < reqs.size(); i = next.fetch_add(1))
          run_one(i);
      });
    }
  }
  return slots;
}

}  // namespace selfimprove
