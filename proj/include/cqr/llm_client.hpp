// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqr/http_transport.hpp"
#include "cqr/util.hpp"

namespace cqr::llm {

inline constexpr int kDefaultMaxTokens = 2560;

struct CompletionRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = kDefaultMaxTokens;
};

struct CompletionResponse {
  std::string text;
  bool cached = false;
  double latency_ms = 0.0;
};

/// Chat-completion payload with the prompt as a single user message.
json request_body(const CompletionRequest& request);

/// Content of the first choice. Throws Error("empty response") when blank.
std::string parse_completion_text(std::string_view body);

/// Content address of a request: SHA-256 over the canonical JSON of all four fields.
std::string cache_key(const CompletionRequest& request);

/// SHA-256 of the prompt text; the key used by mock transcripts.
std::string prompt_hash(std::string_view prompt);

/// Append-only JSONL store of {key, text}. A truncated final line (an
/// interrupted write) is ignored on load.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> path = std::nullopt);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& text);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  bool unterminated_ = false;  // file ends mid-line
};

/// Grants at most one request per 1/rate seconds. rate <= 0 disables it.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_{};
  std::mutex mu_;
  std::optional<std::chrono::steady_clock::time_point> next_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double jitter = 0.25;  // delay *= 1 + U[0, jitter)
};

struct ClientConfig {
  std::string path = "/v1/chat/completions";
  int concurrency = 4;
  double rate_per_second = 0.0;
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_path;
  std::uint64_t jitter_seed = 42;
};

/// Thread-safe completion client: cache, bounded parallelism, rate limit and
/// retries all live here.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<Transport> transport, ClientConfig config = {});

  /// Throws HttpError for non-retryable statuses, Error when retries are
  /// exhausted or the completion is empty.
  CompletionResponse complete(const CompletionRequest& request);

  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  const ClientConfig& config() const noexcept { return config_; }

 private:
  std::chrono::milliseconds backoff(int attempt);

  std::shared_ptr<Transport> transport_;
  ClientConfig config_;
  ResponseCache cache_;
  RateLimiter limiter_;
  std::counting_semaphore<1024> slots_;
  std::atomic<std::size_t> network_calls_{0};
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

/// Scripted chat-completion backend keyed by prompt hash. Unknown prompts get
/// a 404. Records what it saw for tests.
class MockTransport : public Transport {
 public:
  MockTransport() = default;

  /// Loads JSONL lines {prompt_hash, response_text}.
  static std::shared_ptr<MockTransport> from_transcript(const std::filesystem::path& path);

  void script(const std::string& hash, std::string text);
  void script_prompt(std::string_view prompt, std::string text) { script(prompt_hash(prompt), std::move(text)); }
  void set_delay(std::chrono::microseconds delay) { delay_ = delay; }
  /// Queue statuses returned (in order) before any scripted answer. 0 simulates
  /// a transport failure.
  void force_statuses(std::vector<int> statuses);

  HttpResponse post(const std::string& path, const std::string& body) override;

  std::size_t calls() const;
  int max_in_flight() const noexcept { return max_in_flight_.load(); }
  std::vector<std::chrono::steady_clock::time_point> call_times() const;
  std::string last_body() const;

 private:
  std::chrono::microseconds delay_{0};
  mutable std::mutex mu_;
  std::map<std::string, std::string> script_;
  std::deque<int> forced_;
  std::vector<std::chrono::steady_clock::time_point> times_;
  std::string last_body_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

}  // namespace cqr::llm
