// Copyright 2026 The Tiereval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tiereval/gateway.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "test_util.hpp"
#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

using testing::TempDir;
using testing::write_file;
using std::chrono::milliseconds;

ProviderConfig mock_config(const std::string& dir) {
  ProviderConfig c;
  c.provider_id = "mock-model";
  c.mock_dir = dir;
  c.max_retries = 3;
  return c;
}

Request request_for(const std::string& id) {
  Request r;
  r.sample_id = id;
  r.system_prompt = "prompt";
  r.description = "A woman's dress photographed from front view";
  return r;
}

struct RecordingSleeper {
  std::vector<milliseconds> calls;
  Sleeper fn() {
    return [this](milliseconds d) { calls.push_back(d); };
  }
};

TEST(MockAdapterTest, ServesPerSampleThenDefaultText) {
  TempDir dir;
  write_file(dir.file("a.txt"), "alpha");
  write_file(dir.file("default.txt"), "fallback");
  MockAdapter adapter(dir.path().string());
  const AttemptResult a = adapter.attempt(request_for("a"));
  EXPECT_EQ(a.status, ResponseStatus::kOk);
  EXPECT_EQ(a.raw_text, "alpha");
  EXPECT_EQ(a.usage.output_tokens, 2);
  const AttemptResult b = adapter.attempt(request_for("b"));
  EXPECT_EQ(b.raw_text, "fallback");
  EXPECT_EQ(b.usage.output_tokens, 2);
  EXPECT_EQ(b.usage.input_tokens,
            static_cast<std::int64_t>((6 + request_for("b").description.size() + 3) / 4));
}

TEST(MockAdapterTest, BlockedAndMissingResponses) {
  TempDir dir;
  write_file(dir.file("x.blocked"), "");
  MockAdapter adapter(dir.path().string());
  EXPECT_EQ(adapter.attempt(request_for("x")).status, ResponseStatus::kSafetyBlocked);
  const AttemptResult none = adapter.attempt(request_for("y"));
  EXPECT_EQ(none.status, ResponseStatus::kTransportError);
  EXPECT_FALSE(none.retryable);
}

TEST(MockAdapterTest, MissingDirectoryThrows) {
  EXPECT_THROW(MockAdapter("/nonexistent/tiereval/mock"), MissingInputError);
}

TEST(SubmitTest, RetriesWithExponentialBackoff) {
  TempDir dir;
  write_file(dir.file("s.fail"), "2");
  write_file(dir.file("s.txt"), "ok");
  MockAdapter adapter(dir.path().string());
  RecordingSleeper sleeper;
  const ResponseEnvelope env =
      submit(request_for("s"), mock_config(dir.path().string()), adapter, sleeper.fn());
  EXPECT_EQ(env.status, ResponseStatus::kOk);
  EXPECT_EQ(env.attempts, 3);
  ASSERT_EQ(sleeper.calls.size(), 2u);
  EXPECT_EQ(sleeper.calls[0], milliseconds(1000));
  EXPECT_EQ(sleeper.calls[1], milliseconds(2000));
  EXPECT_TRUE(env.error.empty());
}

TEST(SubmitTest, ExhaustedRetriesGiveTimeout) {
  TempDir dir;
  write_file(dir.file("s.fail"), "10");
  write_file(dir.file("s.txt"), "ok");
  MockAdapter adapter(dir.path().string());
  RecordingSleeper sleeper;
  const ResponseEnvelope env =
      submit(request_for("s"), mock_config(dir.path().string()), adapter, sleeper.fn());
  EXPECT_EQ(env.status, ResponseStatus::kTimeout);
  EXPECT_EQ(env.attempts, 4);
  EXPECT_EQ(sleeper.calls.size(), 3u);
  EXPECT_FALSE(env.raw_text.has_value());
}

TEST(SubmitTest, NonRetryableAndSafetyBlocksStopImmediately) {
  TempDir dir;
  write_file(dir.file("b.blocked"), "");
  MockAdapter adapter(dir.path().string());
  RecordingSleeper sleeper;
  const auto config = mock_config(dir.path().string());
  const ResponseEnvelope missing = submit(request_for("m"), config, adapter, sleeper.fn());
  EXPECT_EQ(missing.status, ResponseStatus::kTransportError);
  EXPECT_EQ(missing.attempts, 1);
  const ResponseEnvelope blocked = submit(request_for("b"), config, adapter, sleeper.fn());
  EXPECT_EQ(blocked.status, ResponseStatus::kSafetyBlocked);
  EXPECT_EQ(blocked.attempts, 1);
  EXPECT_TRUE(sleeper.calls.empty());
}

class SlowAdapter : public ProviderAdapter {
 public:
  explicit SlowAdapter(InFlightProbe* probe) : probe_(probe) {}
  AttemptResult attempt(const Request& request) override {
    std::this_thread::sleep_for(milliseconds(5));
    AttemptResult r;
    r.status = ResponseStatus::kOk;
    r.raw_text = "text-" + request.sample_id;
    r.usage.input_tokens = 10;
    r.usage.output_tokens = 5;
    (void)probe_;
    return r;
  }

 private:
  InFlightProbe* probe_;
};

TEST(RunBatchTest, RespectsInFlightCapAndPreservesOrder) {
  std::vector<Request> requests;
  for (int i = 0; i < 40; ++i) requests.push_back(request_for("s" + std::to_string(i)));
  ProviderConfig config;
  config.provider_id = "slow";
  config.mock_dir = "unused";
  config.max_in_flight = 3;
  InFlightProbe probe;
  SlowAdapter adapter(&probe);
  const BatchResult result = run_batch(requests, config, adapter, nullptr, &probe);
  ASSERT_EQ(result.envelopes.size(), requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    EXPECT_EQ(result.envelopes[i].sample_id, requests[i].sample_id);
    EXPECT_EQ(result.envelopes[i].raw_text, "text-" + requests[i].sample_id);
  }
  EXPECT_LE(probe.peak.load(), 3u);
  EXPECT_GE(probe.peak.load(), 1u);
  EXPECT_EQ(probe.started.load(), requests.size());
  EXPECT_EQ(result.submitted, requests.size());
}

TEST(RunBatchTest, CacheSkipsCompletedRequestsAndRetriesFailures) {
  TempDir dir;
  const std::string mock = (dir.path() / "mock").string();
  write_file(mock + "/default.txt", "{}");
  write_file(mock + "/b.blocked", "");
  const auto config = mock_config(mock);
  const std::vector<Request> requests = {request_for("a"), request_for("b"),
                                         request_for("c")};
  {
    ResponseCache cache(dir.file("cache.jsonl"));
    MockAdapter adapter(mock);
    const BatchResult first = run_batch(requests, config, adapter, &cache);
    EXPECT_EQ(first.submitted, 3u);
    EXPECT_EQ(first.from_cache, 0u);
    EXPECT_EQ(cache.size(), 3u);
  }
  ResponseCache reloaded(dir.file("cache.jsonl"));
  EXPECT_EQ(reloaded.size(), 3u);
  MockAdapter adapter(mock);
  const BatchResult second = run_batch(requests, config, adapter, &reloaded);
  EXPECT_EQ(second.submitted, 0u);
  EXPECT_EQ(second.from_cache, 3u);
  EXPECT_EQ(second.envelopes[1].status, ResponseStatus::kSafetyBlocked);
}

TEST(RunBatchTest, FailedCachedEnvelopeIsResubmitted) {
  TempDir dir;
  const std::string mock = (dir.path() / "mock").string();
  std::filesystem::create_directories(mock);
  const auto config = mock_config(mock);
  const std::vector<Request> requests = {request_for("a")};
  ResponseCache cache(dir.file("cache.jsonl"));
  MockAdapter adapter(mock);
  EXPECT_EQ(run_batch(requests, config, adapter, &cache).envelopes[0].status,
            ResponseStatus::kTransportError);
  write_file(mock + "/a.txt", "now ok");
  const BatchResult retry = run_batch(requests, config, adapter, &cache);
  EXPECT_EQ(retry.submitted, 1u);
  EXPECT_EQ(retry.envelopes[0].status, ResponseStatus::kOk);
  EXPECT_EQ(cache.latest("mock-model", "a")->raw_text, "now ok");
}

TEST(ResponseCacheTest, PromptChangeMissesCache) {
  TempDir dir;
  ResponseCache cache(dir.file("c.jsonl"));
  ResponseEnvelope e;
  e.sample_id = "a";
  e.model = "m";
  e.prompt_hash = prompt_hash(request_for("a"));
  e.status = ResponseStatus::kOk;
  e.raw_text = "x";
  cache.append(e);
  Request changed = request_for("a");
  changed.system_prompt = "another prompt";
  EXPECT_TRUE(cache.find("m", "a", e.prompt_hash).has_value());
  EXPECT_FALSE(cache.find("m", "a", prompt_hash(changed)).has_value());
  EXPECT_TRUE(cache.latest("m", "a").has_value());
}

TEST(ResponseCacheTest, CorruptLineThrows) {
  TempDir dir;
  write_file(dir.file("c.jsonl"), "{not json\n");
  EXPECT_THROW(ResponseCache(dir.file("c.jsonl")), DataError);
}

TEST(EnvelopeTest, JsonRoundTrip) {
  ResponseEnvelope e;
  e.sample_id = "s1";
  e.model = "m";
  e.prompt_hash = "abc";
  e.status = ResponseStatus::kOk;
  e.raw_text = "raw";
  e.usage = {100, 20, 7};
  e.latency = milliseconds(42);
  e.attempts = 2;
  EXPECT_EQ(envelope_from_json(to_json(e)), e);
  ResponseEnvelope blocked = e;
  blocked.status = ResponseStatus::kSafetyBlocked;
  blocked.raw_text.reset();
  blocked.usage.thinking_tokens.reset();
  blocked.error = "content_filter";
  EXPECT_EQ(envelope_from_json(to_json(blocked)), blocked);
}

TEST(EnvelopeTest, RejectsInvalidStatus) {
  nlohmann::json j = to_json(ResponseEnvelope{});
  j["status"] = "exploded";
  EXPECT_THROW(envelope_from_json(j), DataError);
}

TEST(CostTest, WorkedExample) {
  const PricingSpec pricing = PricingSpec::from_json(
      {{"m", {{"input_per_1m", 1.25}, {"output_per_1m", 10.0}}}});
  UsageRecord usage{1000, 200, std::nullopt};
  EXPECT_DOUBLE_EQ(compute_cost(usage, pricing, "m"), 0.00325);
  EXPECT_EQ(compute_cost_pico(usage, pricing.at("m")), 3250000000);
  usage.output_tokens = 150;
  usage.thinking_tokens = 50;
  EXPECT_DOUBLE_EQ(compute_cost(usage, pricing, "m"), 0.00325);
  EXPECT_THROW(compute_cost(usage, pricing, "unknown"), ConfigError);
}

TEST(CostTest, LedgerIsExactlyAdditive) {
  const ModelPrice price{50000, 400000};
  CostLedger whole;
  CostLedger a;
  CostLedger b;
  PicoMoney expected = 0;
  for (int i = 0; i < 1000; ++i) {
    const UsageRecord u{300 + i, 17 + i % 7, i % 3 ? std::optional<std::int64_t>(i) : std::nullopt};
    whole.add("m", u, price);
    (i % 2 ? a : b).add("m", u, price);
    expected += compute_cost_pico(u, price);
  }
  a.merge(b);
  EXPECT_EQ(whole.total_pico("m"), expected);
  EXPECT_EQ(a.total_pico("m"), expected);
  EXPECT_EQ(a.requests("m"), 1000u);
  EXPECT_EQ(whole.total_pico(), expected);
}

TEST(CostTest, OverflowThrows) {
  const ModelPrice price{std::int64_t{1} << 40, 0};
  const UsageRecord u{std::int64_t{1} << 40, 0, std::nullopt};
  EXPECT_THROW(compute_cost_pico(u, price), std::overflow_error);
}

TEST(ProviderConfigTest, ParsesAndDigestsStably) {
  const nlohmann::json j = {{"provider_id", "g"},
                            {"adapter", "gemini"},
                            {"endpoint", "https://example.invalid"},
                            {"model_name", "gemini-x"},
                            {"auth_env", "G_KEY"},
                            {"thinking_budget_tokens", 0},
                            {"temperature", 0.0}};
  const ProviderConfig c = provider_from_json(j);
  EXPECT_EQ(c.adapter, AdapterKind::kGemini);
  EXPECT_EQ(c.thinking_budget_tokens, 0);
  EXPECT_EQ(provider_digest(c), provider_digest(provider_from_json(to_json(c))));
  ProviderConfig other = c;
  other.temperature = 1.0;
  EXPECT_NE(provider_digest(c), provider_digest(other));
}

TEST(ProviderConfigTest, RejectsInvalidConfigs) {
  EXPECT_THROW(provider_from_json({{"provider_id", "o"},
                                   {"adapter", "openai"},
                                   {"endpoint", "http://x"},
                                   {"auth_env", "K"},
                                   {"thinking_budget_tokens", 100}}),
               ConfigError);
  EXPECT_THROW(provider_from_json({{"provider_id", "m"}}), ConfigError);
  EXPECT_THROW(provider_from_json({{"provider_id", "m"}, {"adapter", "nope"}}), ConfigError);
  EXPECT_THROW(provider_from_json({{"provider_id", "m"},
                                   {"mock_dir", "d"},
                                   {"max_in_flight", 0}}),
               ConfigError);
}

TEST(ProviderConfigTest, MissingKeyNamesVariable) {
  ProviderConfig c;
  c.provider_id = "o";
  c.adapter = AdapterKind::kOpenAI;
  c.endpoint = "http://127.0.0.1:1";
  c.model_name = "gpt";
  c.auth_env = "TIEREVAL_TEST_UNSET_KEY";
  unsetenv("TIEREVAL_TEST_UNSET_KEY");
  try {
    make_adapter(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("TIEREVAL_TEST_UNSET_KEY"), std::string::npos);
  }
}

// Serves one canned JSON body on any POST and records the last request.
class FakeServer {
 public:
  explicit FakeServer(std::string body, int status = 200) : body_(std::move(body)) {
    server_.Post(".*", [this, status](const httplib::Request& req, httplib::Response& res) {
      path = req.path;
      auth = req.get_header_value("Authorization");
      api_key = req.get_header_value("x-goog-api-key");
      request_body = req.body;
      res.status = status;
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::string path;
  std::string auth;
  std::string api_key;
  std::string request_body;

 private:
  std::string body_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ProviderConfig http_config(AdapterKind kind, const std::string& endpoint) {
  ProviderConfig c;
  c.provider_id = "http";
  c.adapter = kind;
  c.endpoint = endpoint;
  c.model_name = "model-x";
  c.auth_env = "TIEREVAL_TEST_KEY";
  c.max_retries = 0;
  c.request_timeout = milliseconds(5000);
  setenv("TIEREVAL_TEST_KEY", "secret", 1);
  return c;
}

Request image_request(const TempDir& dir) {
  Request r = request_for("img");
  r.image_path = dir.file("img.jpg");
  write_file(r.image_path, "\xff\xd8\xff");
  return r;
}

TEST(OpenAIAdapterTest, ParsesTextAndUsage) {
  FakeServer server(R"({"choices":[{"finish_reason":"stop","message":{"content":"hello"}}],
      "usage":{"prompt_tokens":120,"completion_tokens":50,
               "completion_tokens_details":{"reasoning_tokens":30}}})");
  TempDir dir;
  auto adapter = make_adapter(http_config(AdapterKind::kOpenAI, server.endpoint()));
  const AttemptResult r = adapter->attempt(image_request(dir));
  EXPECT_EQ(r.status, ResponseStatus::kOk);
  EXPECT_EQ(r.raw_text, "hello");
  EXPECT_EQ(r.usage.input_tokens, 120);
  EXPECT_EQ(r.usage.output_tokens, 20);
  EXPECT_EQ(r.usage.thinking_tokens, 30);
  EXPECT_EQ(server.path, "/v1/chat/completions");
  EXPECT_EQ(server.auth, "Bearer secret");
  const auto sent = nlohmann::json::parse(server.request_body);
  EXPECT_EQ(sent["model"], "model-x");
  EXPECT_EQ(sent["messages"][0]["content"], "prompt");
  EXPECT_EQ(sent["messages"][1]["content"][1]["image_url"]["url"],
            "data:image/jpeg;base64," + base64_encode("\xff\xd8\xff"));
}

TEST(OpenAIAdapterTest, ContentFilterAndRefusalAreSafetyBlocks) {
  TempDir dir;
  {
    FakeServer server(R"({"choices":[{"finish_reason":"content_filter","message":{}}]})");
    auto adapter = make_adapter(http_config(AdapterKind::kOpenAI, server.endpoint()));
    EXPECT_EQ(adapter->attempt(image_request(dir)).status, ResponseStatus::kSafetyBlocked);
  }
  {
    FakeServer server(
        R"({"choices":[{"finish_reason":"stop","message":{"content":null,"refusal":"no"}}]})");
    auto adapter = make_adapter(http_config(AdapterKind::kOpenAI, server.endpoint()));
    EXPECT_EQ(adapter->attempt(image_request(dir)).status, ResponseStatus::kSafetyBlocked);
  }
}

TEST(OpenAIAdapterTest, HttpErrorsClassifyRetryability) {
  TempDir dir;
  {
    FakeServer server("{}", 429);
    auto adapter = make_adapter(http_config(AdapterKind::kOpenAI, server.endpoint()));
    const AttemptResult r = adapter->attempt(image_request(dir));
    EXPECT_EQ(r.status, ResponseStatus::kTransportError);
    EXPECT_TRUE(r.retryable);
  }
  {
    FakeServer server("{}", 400);
    auto adapter = make_adapter(http_config(AdapterKind::kOpenAI, server.endpoint()));
    EXPECT_FALSE(adapter->attempt(image_request(dir)).retryable);
  }
}

TEST(OpenAIAdapterTest, MissingImageIsNotRetryable) {
  FakeServer server("{}");
  auto adapter = make_adapter(http_config(AdapterKind::kOpenAI, server.endpoint()));
  Request r = request_for("x");
  r.image_path = "/nonexistent/image.jpg";
  const AttemptResult result = adapter->attempt(r);
  EXPECT_EQ(result.status, ResponseStatus::kTransportError);
  EXPECT_FALSE(result.retryable);
}

TEST(GeminiAdapterTest, SkipsThoughtPartsAndParsesUsage) {
  FakeServer server(R"({"candidates":[{"finishReason":"STOP","content":{"parts":[
      {"text":"thinking...","thought":true},{"text":"answer"}]}}],
      "usageMetadata":{"promptTokenCount":300,"candidatesTokenCount":40,
                       "thoughtsTokenCount":512}})");
  TempDir dir;
  ProviderConfig config = http_config(AdapterKind::kGemini, server.endpoint());
  config.thinking_budget_tokens = 0;
  auto adapter = make_adapter(config);
  const AttemptResult r = adapter->attempt(image_request(dir));
  EXPECT_EQ(r.status, ResponseStatus::kOk);
  EXPECT_EQ(r.raw_text, "answer");
  EXPECT_EQ(r.usage.input_tokens, 300);
  EXPECT_EQ(r.usage.output_tokens, 40);
  EXPECT_EQ(r.usage.thinking_tokens, 512);
  EXPECT_EQ(server.path, "/v1beta/models/model-x:generateContent");
  EXPECT_EQ(server.api_key, "secret");
  const auto sent = nlohmann::json::parse(server.request_body);
  EXPECT_EQ(sent["generationConfig"]["thinkingConfig"]["thinkingBudget"], 0);
}

TEST(GeminiAdapterTest, BlockReasonsAreSafetyBlocks) {
  TempDir dir;
  for (const std::string body :
       {R"({"promptFeedback":{"blockReason":"SAFETY"}})",
        R"({"candidates":[{"finishReason":"IMAGE_SAFETY"}]})",
        R"({"candidates":[{"finishReason":"PROHIBITED_CONTENT"}]})"}) {
    FakeServer server(body);
    auto adapter = make_adapter(http_config(AdapterKind::kGemini, server.endpoint()));
    EXPECT_EQ(adapter->attempt(image_request(dir)).status, ResponseStatus::kSafetyBlocked)
        << body;
  }
}

TEST(HashTest, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
}

}  // namespace
}  // namespace tiereval
