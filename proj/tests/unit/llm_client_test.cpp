// SPDX-License-Identifier: Apache-2.0
#include <future>
#include <thread>

#include "cqr/error.hpp"
#include "cqr/llm_client.hpp"
#include "test_support.hpp"

using namespace cqr;
using namespace cqr::llm;
using namespace std::chrono_literals;

namespace {

ClientConfig fast_config() {
  ClientConfig c;
  c.retry.base_delay = 1ms;
  return c;
}

CompletionRequest req(const std::string& prompt) { return {"gpt-3.5-turbo", prompt, 0.0, kDefaultMaxTokens}; }

}  // namespace

TEST(RequestBody, CarriesDecodingSettings) {
  const auto body = request_body(req("hi"));
  EXPECT_EQ(body.at("temperature"), 0.0);
  EXPECT_EQ(body.at("max_tokens"), 2560);
  EXPECT_EQ(body.at("model"), "gpt-3.5-turbo");
  EXPECT_EQ(body.at("messages").at(0).at("content"), "hi");
  EXPECT_EQ(body.at("messages").at(0).at("role"), "user");
}

TEST(RequestBody, CacheKeyCoversEveryField) {
  const auto base = cache_key(req("p"));
  EXPECT_EQ(base, cache_key(req("p")));
  EXPECT_EQ(base.size(), 64u);
  auto r = req("p");
  r.temperature = 0.7;
  EXPECT_NE(cache_key(r), base);
  r = req("p");
  r.max_tokens = 10;
  EXPECT_NE(cache_key(r), base);
  r = req("p");
  r.model = "other";
  EXPECT_NE(cache_key(r), base);
  EXPECT_NE(cache_key(req("q")), base);
  EXPECT_EQ(prompt_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ParseCompletion, ExtractsFirstChoice) {
  EXPECT_EQ(parse_completion_text(R"({"choices":[{"message":{"role":"assistant","content":"Hi"}}]})"), "Hi");
  EXPECT_THROW(parse_completion_text(R"({"choices":[{"message":{"content":"  "}}]})"), Error);
  EXPECT_THROW(parse_completion_text(R"({"choices":[]})"), Error);
  EXPECT_THROW(parse_completion_text("not json"), Error);
}

TEST(Client, ScriptedAnswerThenCacheHit) {
  auto mock = std::make_shared<MockTransport>();
  mock->script_prompt("hello", "world");
  LlmClient client(mock, fast_config());
  auto first = client.complete(req("hello"));
  EXPECT_EQ(first.text, "world");
  EXPECT_FALSE(first.cached);
  auto second = client.complete(req("hello"));
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(second.text, "world");
  EXPECT_EQ(client.network_calls(), 1u);
  EXPECT_EQ(json::parse(mock->last_body()).at("max_tokens"), 2560);
}

TEST(Client, RetriesTransientFailures) {
  auto mock = std::make_shared<MockTransport>();
  mock->script_prompt("p", "ok");
  mock->force_statuses({429, 500, 0, 503});
  LlmClient client(mock, fast_config());
  EXPECT_EQ(client.complete(req("p")).text, "ok");
  EXPECT_EQ(client.network_calls(), 5u);
}

TEST(Client, GivesUpAfterMaxAttempts) {
  auto mock = std::make_shared<MockTransport>();
  mock->script_prompt("p", "ok");
  mock->force_statuses({500, 500, 500, 500, 500});
  LlmClient client(mock, fast_config());
  EXPECT_THROW(client.complete(req("p")), Error);
  EXPECT_EQ(client.network_calls(), 5u);
}

TEST(Client, NonRetryableStatusIsImmediate) {
  auto mock = std::make_shared<MockTransport>();
  mock->force_statuses({400});
  LlmClient client(mock, fast_config());
  try {
    client.complete(req("p"));
    FAIL();
  } catch (const HttpError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_EQ(client.network_calls(), 1u);
  EXPECT_THROW(client.complete(req("unscripted")), HttpError);
}

TEST(Client, EmptyCompletionIsAnError) {
  auto mock = std::make_shared<MockTransport>();
  mock->script_prompt("p", "   ");
  LlmClient client(mock, fast_config());
  EXPECT_THROW(client.complete(req("p")), Error);
}

TEST(Client, ConcurrencyIsBounded) {
  auto mock = std::make_shared<MockTransport>();
  for (int i = 0; i < 24; ++i) mock->script_prompt("p" + std::to_string(i), "r");
  mock->set_delay(5ms);
  auto cfg = fast_config();
  cfg.concurrency = 3;
  LlmClient client(mock, cfg);
  std::vector<std::future<CompletionResponse>> futs;
  for (int i = 0; i < 24; ++i) {
    futs.push_back(std::async(std::launch::async, [&, i] { return client.complete(req("p" + std::to_string(i))); }));
  }
  for (auto& f : futs) EXPECT_EQ(f.get().text, "r");
  EXPECT_LE(mock->max_in_flight(), 3);
  EXPECT_GE(mock->max_in_flight(), 2);
}

TEST(Client, RateLimitSpacesCalls) {
  auto mock = std::make_shared<MockTransport>();
  for (int i = 0; i < 6; ++i) mock->script_prompt("p" + std::to_string(i), "r");
  auto cfg = fast_config();
  cfg.rate_per_second = 50;  // one call per 20 ms
  cfg.concurrency = 6;
  LlmClient client(mock, cfg);
  std::vector<std::thread> ts;
  for (int i = 0; i < 6; ++i) ts.emplace_back([&, i] { client.complete(req("p" + std::to_string(i))); });
  for (auto& t : ts) t.join();
  auto times = mock->call_times();
  ASSERT_EQ(times.size(), 6u);
  std::sort(times.begin(), times.end());
  for (std::size_t i = 1; i < times.size(); ++i) EXPECT_GE(times[i] - times[i - 1], 19ms);
}

TEST(Cache, PersistsAcrossClients) {
  cqr::testing::TempDir dir;
  auto mock = std::make_shared<MockTransport>();
  mock->script_prompt("p", "stored");
  auto cfg = fast_config();
  cfg.cache_path = dir / "cache.jsonl";
  {
    LlmClient client(mock, cfg);
    client.complete(req("p"));
  }
  auto fresh = std::make_shared<MockTransport>();
  LlmClient client(fresh, cfg);
  auto r = client.complete(req("p"));
  EXPECT_TRUE(r.cached);
  EXPECT_EQ(r.text, "stored");
  EXPECT_EQ(fresh->calls(), 0u);
}

TEST(Cache, TruncatedLastLineIsIgnoredButCorruptionIsNot) {
  cqr::testing::TempDir dir;
  write_file(dir / "c.jsonl", "{\"key\":\"a\",\"text\":\"A\"}\n{\"key\":\"b\",\"te");
  ResponseCache cache(dir / "c.jsonl");
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(cache.get("a"), "A");
  cache.put("c", "C");
  EXPECT_EQ(ResponseCache(dir / "c.jsonl").get("c"), "C");

  write_file(dir / "bad.jsonl", "garbage\n{\"key\":\"a\",\"text\":\"A\"}\n");
  EXPECT_THROW(ResponseCache(dir / "bad.jsonl"), InputError);
}

TEST(Mock, TranscriptLoads) {
  cqr::testing::TempDir dir;
  write_file(dir / "t.jsonl", json{{"prompt_hash", prompt_hash("q")}, {"response_text", "a"}}.dump() + "\n");
  auto mock = MockTransport::from_transcript(dir / "t.jsonl");
  LlmClient client(mock, fast_config());
  EXPECT_EQ(client.complete(req("q")).text, "a");
}
