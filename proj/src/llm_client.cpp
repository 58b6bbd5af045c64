// SPDX-License-Identifier: Apache-2.0
#include "cqr/llm_client.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "cqr/error.hpp"

namespace cqr::llm {

json request_body(const CompletionRequest& request) {
  return json{{"model", request.model},
              {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

std::string parse_completion_text(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed completion body: ") + e.what());
  }
  std::string text;
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_string()) text = content.get<std::string>();
  } catch (const json::exception&) {
    throw Error("completion body has no choices[0].message.content");
  }
  if (trim(text).empty()) throw Error("empty response");
  return text;
}

std::string cache_key(const CompletionRequest& request) {
  const json canonical{{"max_tokens", request.max_tokens},
                       {"model", request.model},
                       {"prompt", request.prompt},
                       {"temperature", request.temperature}};
  return sha256_hex(canonical.dump());
}

std::string prompt_hash(std::string_view prompt) { return sha256_hex(prompt); }

ResponseCache::ResponseCache(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (!path_ || !std::filesystem::exists(*path_)) return;
  const std::string data = read_file(*path_);
  std::size_t pos = 0, line_no = 0;
  while (pos < data.size()) {
    auto end = data.find('\n', pos);
    const bool last = end == std::string::npos || data.find_first_not_of(" \t\r\n", end) == std::string::npos;
    if (end == std::string::npos) end = data.size();
    const std::string_view line(data.data() + pos, end - pos);
    ++line_no;
    if (!trim(line).empty()) {
      try {
        auto rec = json::parse(line);
        entries_[rec.at("key").get<std::string>()] = rec.at("text").get<std::string>();
      } catch (const json::exception& e) {
        if (!last) throw InputError(path_->string() + ": line " + std::to_string(line_no) + ": " + e.what());
        // Interrupted write: cut the torn record so later appends start clean.
        std::filesystem::resize_file(*path_, pos);
        return;
      }
    }
    pos = end + 1;
  }
  unterminated_ = !data.empty() && data.back() != '\n';
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& text) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(key, text).second) return;
  if (!path_) return;
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw Error("cannot append to cache " + path_->string());
  if (unterminated_) out << '\n';
  unterminated_ = false;
  out << json{{"key", key}, {"text", text}}.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

RateLimiter::RateLimiter(double per_second) {
  if (per_second > 0) {
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / per_second));
  }
}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  for (;;) {
    std::chrono::steady_clock::time_point wake;
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      if (!next_ || now >= *next_) {
        next_ = now + interval_;
        return;
      }
      wake = *next_;
    }
    std::this_thread::sleep_until(wake);
  }
}

namespace {
bool retryable(int status) { return status == 429 || status >= 500; }
}  // namespace

LlmClient::LlmClient(std::shared_ptr<Transport> transport, ClientConfig config)
    : transport_(std::move(transport)),
      config_(std::move(config)),
      cache_(config_.cache_path),
      limiter_(config_.rate_per_second),
      slots_(std::max(1, config_.concurrency)),
      rng_(config_.jitter_seed) {
  if (!transport_) throw Error("LLM client needs a transport");
  if (config_.concurrency < 1 || config_.concurrency > 1024) throw Error("concurrency must be in [1, 1024]");
  if (config_.retry.max_attempts < 1) throw Error("max_attempts must be positive");
}

std::chrono::milliseconds LlmClient::backoff(int attempt) {
  double u;
  {
    std::lock_guard lock(rng_mu_);
    u = std::uniform_real_distribution<double>(0.0, config_.retry.jitter)(rng_);
  }
  const double ms = static_cast<double>(config_.retry.base_delay.count()) * std::ldexp(1.0, attempt) * (1.0 + u);
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

CompletionResponse LlmClient::complete(const CompletionRequest& request) {
  if (request.max_tokens <= 0) throw Error("max_tokens must be positive");
  const std::string key = cache_key(request);
  if (auto hit = cache_.get(key)) return {*hit, true, 0.0};

  const std::string body = request_body(request).dump();
  std::string last_error;
  for (int attempt = 0; attempt < config_.retry.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(backoff(attempt - 1));
    HttpResponse resp;
    double latency_ms = 0.0;
    {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{slots_};
      limiter_.acquire();
      ++network_calls_;
      const auto start = std::chrono::steady_clock::now();
      try {
        resp = transport_->post(config_.path, body);
      } catch (const TransportError& e) {
        last_error = e.what();
        continue;
      }
      latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    if (resp.status >= 200 && resp.status < 300) {
      std::string text = parse_completion_text(resp.body);
      cache_.put(key, text);
      return {std::move(text), false, latency_ms};
    }
    if (!retryable(resp.status)) throw HttpError(resp.status, resp.body);
    last_error = "HTTP " + std::to_string(resp.status);
  }
  throw Error("completion failed after " + std::to_string(config_.retry.max_attempts) +
              " attempts: " + last_error);
}

std::shared_ptr<MockTransport> MockTransport::from_transcript(const std::filesystem::path& path) {
  auto mock = std::make_shared<MockTransport>();
  for_each_jsonl(path, [&](std::size_t line_no, const json& rec) {
    if (!rec.contains("prompt_hash") || !rec.contains("response_text")) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) +
                       ": expected prompt_hash and response_text");
    }
    mock->script(rec["prompt_hash"].get<std::string>(), rec["response_text"].get<std::string>());
  });
  return mock;
}

void MockTransport::script(const std::string& hash, std::string text) {
  std::lock_guard lock(mu_);
  script_[hash] = std::move(text);
}

void MockTransport::force_statuses(std::vector<int> statuses) {
  std::lock_guard lock(mu_);
  forced_.insert(forced_.end(), statuses.begin(), statuses.end());
}

HttpResponse MockTransport::post(const std::string& /*path*/, const std::string& body) {
  const int now_in = ++in_flight_;
  for (int seen = max_in_flight_.load(); now_in > seen && !max_in_flight_.compare_exchange_weak(seen, now_in);) {
  }
  struct Leave {
    std::atomic<int>& n;
    ~Leave() { --n; }
  } leave{in_flight_};

  std::optional<int> forced;
  {
    std::lock_guard lock(mu_);
    times_.push_back(std::chrono::steady_clock::now());
    last_body_ = body;
    if (!forced_.empty()) {
      forced = forced_.front();
      forced_.pop_front();
    }
  }
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  if (forced) {
    if (*forced == 0) throw TransportError("simulated connection failure");
    return {*forced, "forced status"};
  }

  std::string prompt;
  try {
    prompt = json::parse(body).at("messages").at(0).at("content").get<std::string>();
  } catch (const json::exception& e) {
    return {400, std::string("bad request: ") + e.what()};
  }
  const std::string hash = prompt_hash(prompt);
  std::lock_guard lock(mu_);
  auto it = script_.find(hash);
  if (it == script_.end()) return {404, "no scripted response for prompt hash " + hash};
  const json reply{{"choices", json::array({json{{"index", 0},
                                                  {"message", {{"role", "assistant"}, {"content", it->second}}},
                                                  {"finish_reason", "stop"}}})}};
  return {200, reply.dump()};
}

std::size_t MockTransport::calls() const {
  std::lock_guard lock(mu_);
  return times_.size();
}

std::vector<std::chrono::steady_clock::time_point> MockTransport::call_times() const {
  std::lock_guard lock(mu_);
  return times_;
}

std::string MockTransport::last_body() const {
  std::lock_guard lock(mu_);
  return last_body_;
}

}  // namespace cqr::llm
