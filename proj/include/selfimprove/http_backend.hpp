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

// JSON-over-HTTP completion client. The native wire format is
//
//   POST {prompt, temperature, max_tokens, n, stop, seed, ...options}
//   ->   {choices: [{text}, ...]}
//
// and the "openai" dialect adds `model` and targets /v1/completions.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "selfimprove/backend.hpp"

namespace selfimprove {

struct RetryPolicy {
  std::size_t max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  std::chrono::milliseconds max_delay{30000};
  bool jitter = true;
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  // Delay before attempt `attempt + 1`, with attempt counted from 1.
  std::chrono::milliseconds delay_after(std::size_t attempt) const {
    auto d = base_delay;
    for (std::size_t i = 1; i < attempt && d < max_delay; ++i) d *= 2;
    d = std::min(d, max_delay);
    if (jitter) {
      thread_local std::mt19937 rng{std::random_device{}()};
      std::uniform_real_distribution<double> u(0.5, 1.0);
      d = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(d.count()) * u(rng)));
    }
    return d;
  }
};

enum class WireDialect { kNative, kOpenAI };

inline WireDialect parse_dialect(std::string_view s) {
  if (s == "native") return WireDialect::kNative;
  if (s == "openai") return WireDialect::kOpenAI;
  throw ConfigError("dialect", "unknown dialect '" + std::string(s) + "'");
}

struct HttpBackendOptions {
  std::string url;  // scheme://host[:port][/path]
  WireDialect dialect = WireDialect::kNative;
  std::string model;
  std::string auth_env = "SELFIMPROVE_API_KEY";
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions opts) : opts_(std::move(opts)) {
    const auto scheme_end = opts_.url.find("://");
    if (scheme_end == std::string::npos)
      throw ConfigError("url", "expected scheme://host[:port]/path, got '" + opts_.url + "'");
    const auto path_start = opts_.url.find('/', scheme_end + 3);
    origin_ = opts_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? std::string() : opts_.url.substr(path_start);
    if (path_.empty())
      path_ = opts_.dialect == WireDialect::kOpenAI ? "/v1/completions" : "/complete";
    if (const char* tok = std::getenv(opts_.auth_env.c_str()); tok && *tok) token_ = tok;
  }

  std::string id() const override {
    return "http:" + origin_ + path_ + (opts_.model.empty() ? "" : "#" + opts_.model);
  }

  json request_body(const CompletionRequest& req) const {
    json body = req.options.is_object() ? req.options : json::object();
    body["prompt"] = req.prompt;
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    body["n"] = req.n_samples;
    body["stop"] = req.stop;
    body["seed"] = req.seed;
    if (opts_.dialect == WireDialect::kOpenAI || !opts_.model.empty())
      body["model"] = opts_.model;
    return body;
  }

  static std::vector<std::string> parse_choices(const json& resp) {
    const auto& choices = resp.at("choices");
    std::vector<std::pair<long long, std::string>> indexed;
    long long pos = 0;
    for (const auto& c : choices) {
      const long long idx = c.contains("index") ? c.at("index").get<long long>() : pos;
      indexed.emplace_back(idx, c.at("text").get<std::string>());
      ++pos;
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (auto& [_, t] : indexed) out.push_back(std::move(t));
    return out;
  }

 protected:
  std::vector<std::string> do_complete(const CompletionRequest& req) override {
    const std::string body = request_body(req).dump();
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    std::string last_error;
    const std::size_t attempts = std::max<std::size_t>(1, opts_.retry.max_attempts);
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client client(origin_);
      client.set_connection_timeout(opts_.timeout);
      client.set_read_timeout(opts_.timeout);
      client.set_write_timeout(opts_.timeout);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        try {
          return parse_choices(json::parse(res->body));
        } catch (const std::exception& e) {
          throw TransportError(attempt, "malformed completion response: " + std::string(e.what()));
        }
      } else if (res->status == 408 || res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
      } else {
        throw TransportError(attempt, "HTTP " + std::to_string(res->status) + ": " + res->body);
      }
      if (attempt < attempts) opts_.retry.sleep(opts_.retry.delay_after(attempt));
    }
    throw TransportError(attempts, "completion request to " + origin_ + path_ + " failed: " + last_error);
  }

 private:
  HttpBackendOptions opts_;
  std::string origin_;
  std::string path_;
  std::string token_;
};

}  // namespace selfimprove
