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

// Provider-agnostic request submission: adapters, retry, bounded
// concurrency, the on-disk response cache, and cost accounting.

#ifndef TIEREVAL_GATEWAY_HPP_
#define TIEREVAL_GATEWAY_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tiereval {

enum class AdapterKind { kMock, kOpenAI, kGemini };
std::string_view adapter_name(AdapterKind kind);
AdapterKind parse_adapter(std::string_view name);

struct ProviderConfig {
  // Unique key for caches, ledgers, and score files.
  std::string provider_id;
  AdapterKind adapter = AdapterKind::kMock;
  // Base URL for HTTP adapters, e.g. "https://api.openai.com".
  std::string endpoint;
  std::string model_name;
  // Name of the environment variable holding the API key.
  std::string auth_env;
  // Forwarded verbatim to providers that support it.
  std::optional<std::int64_t> thinking_budget_tokens;
  // Unset leaves the provider default.
  std::optional<double> temperature;
  int max_retries = 3;
  std::chrono::milliseconds request_timeout{120000};
  std::chrono::milliseconds backoff_initial{1000};
  double backoff_multiplier = 2.0;
  std::size_t max_in_flight = 4;
  // 0 disables rate limiting.
  double max_requests_per_second = 0.0;
  // Mock adapter: directory of canned responses.
  std::string mock_dir;

  // Report metadata.
  std::string display_name;
  std::string group;
  std::string vendor;
  std::string variant;

  // Throws ConfigError.
  void validate() const;
};

// Relative mock_dir paths resolve against `base_dir`.
ProviderConfig provider_from_json(const nlohmann::json& j,
                                  const std::string& base_dir = "");
nlohmann::json to_json(const ProviderConfig& config);
// SHA-256 of the canonical JSON form.
std::string provider_digest(const ProviderConfig& config);

enum class ResponseStatus { kOk, kSafetyBlocked, kTransportError, kTimeout };
std::string_view status_name(ResponseStatus status);
ResponseStatus parse_status(std::string_view name);

struct UsageRecord {
  std::int64_t input_tokens = 0;
  // Visible output, excluding thinking.
  std::int64_t output_tokens = 0;
  std::optional<std::int64_t> thinking_tokens;

  UsageRecord& operator+=(const UsageRecord& other);
  friend bool operator==(const UsageRecord&, const UsageRecord&) = default;
};

// raw_text is present iff status == kOk.
struct ResponseEnvelope {
  std::string sample_id;
  std::string model;
  std::string prompt_hash;
  ResponseStatus status = ResponseStatus::kTransportError;
  std::optional<std::string> raw_text;
  UsageRecord usage;
  std::chrono::milliseconds latency{0};
  int attempts = 0;
  std::string error;

  friend bool operator==(const ResponseEnvelope&,
                         const ResponseEnvelope&) = default;
};

nlohmann::json to_json(const ResponseEnvelope& envelope);
ResponseEnvelope envelope_from_json(const nlohmann::json& j);

struct Request {
  std::string sample_id;
  std::string system_prompt;
  std::string description;
  // Read by HTTP adapters; unused by the mock.
  std::string image_path;
};

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);
// Hash of everything sent besides the image.
std::string prompt_hash(const Request& request);

struct AttemptResult {
  ResponseStatus status = ResponseStatus::kTransportError;
  std::string raw_text;
  UsageRecord usage;
  std::string error;
  // Transport failures that cannot succeed on retry (bad request, missing
  // canned response) set this to false.
  bool retryable = true;
};

// One network (or mock) round trip. Implementations must be safe to call
// from several threads at once.
class ProviderAdapter {
 public:
  virtual ~ProviderAdapter() = default;
  virtual AttemptResult attempt(const Request& request) = 0;
};

// Canned responses from a directory:
//   <sample_id>.blocked  safety block
//   <sample_id>.fail     first N attempts fail with a timeout (N = content)
//   <sample_id>.txt      raw response text
//   default.txt          fallback text for samples without their own file
// Usage is ceil(bytes / 4) for the prompt plus description and for the text.
class MockAdapter : public ProviderAdapter {
 public:
  explicit MockAdapter(std::string dir);
  AttemptResult attempt(const Request& request) override;

 private:
  std::string dir_;
  std::mutex mu_;
  std::map<std::string, int> failures_seen_;
};

// Chat-completions style endpoint with bearer auth.
class OpenAIAdapter : public ProviderAdapter {
 public:
  OpenAIAdapter(ProviderConfig config, std::string api_key);
  AttemptResult attempt(const Request& request) override;
  nlohmann::json build_payload(const Request& request,
                               std::string_view image_b64) const;

 private:
  ProviderConfig config_;
  std::string api_key_;
};

// generateContent style endpoint with an API-key header.
class GeminiAdapter : public ProviderAdapter {
 public:
  GeminiAdapter(ProviderConfig config, std::string api_key);
  AttemptResult attempt(const Request& request) override;
  nlohmann::json build_payload(const Request& request,
                               std::string_view image_b64) const;

 private:
  ProviderConfig config_;
  std::string api_key_;
};

// Throws ConfigError naming the environment variable when an HTTP adapter's
// key is unset.
std::unique_ptr<ProviderAdapter> make_adapter(const ProviderConfig& config);

using Sleeper = std::function<void(std::chrono::milliseconds)>;
void real_sleep(std::chrono::milliseconds duration);

// At most 1 + max_retries attempts. Transport errors and timeouts back off
// exponentially; safety blocks are final. Never throws for provider
// failures; exhausted retries give a kTransportError or kTimeout envelope.
ResponseEnvelope submit(const Request& request, const ProviderConfig& config,
                        ProviderAdapter& adapter,
                        const Sleeper& sleeper = real_sleep);

// JSON-lines of ResponseEnvelope keyed by (model, sample_id, prompt_hash).
// Later lines for the same key replace earlier ones. Appends are serialized.
class ResponseCache {
 public:
  // Loads the file if it exists. Throws DataError on a corrupt line.
  explicit ResponseCache(std::string path);

  std::optional<ResponseEnvelope> find(const std::string& model,
                                       const std::string& sample_id,
                                       const std::string& prompt_hash) const;
  // Latest envelope for (model, sample_id) regardless of prompt hash.
  std::optional<ResponseEnvelope> latest(const std::string& model,
                                         const std::string& sample_id) const;
  void append(const ResponseEnvelope& envelope);

  std::vector<ResponseEnvelope> entries() const;
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::vector<ResponseEnvelope> entries_;
  std::map<std::string, std::size_t> by_key_;
  std::map<std::string, std::size_t> by_sample_;
};

// Test hook for the concurrency cap.
struct InFlightProbe {
  std::atomic<std::size_t> current{0};
  std::atomic<std::size_t> peak{0};
  std::atomic<std::size_t> started{0};
};

struct BatchResult {
  // In request order.
  std::vector<ResponseEnvelope> envelopes;
  std::size_t submitted = 0;
  std::size_t from_cache = 0;
};

// Runs every request under the config's in-flight cap and rate limit.
// Cached kOk and kSafetyBlocked envelopes are reused; other cached
// outcomes are retried.
BatchResult run_batch(std::span<const Request> requests,
                      const ProviderConfig& config, ProviderAdapter& adapter,
                      ResponseCache* cache, InFlightProbe* probe = nullptr,
                      const Sleeper& sleeper = real_sleep);

// Money is fixed point: 1 unit = 1e-12 currency, so tokens times a price in
// micro-currency per million tokens is exact.
using PicoMoney = std::int64_t;
inline constexpr double kPicoPerUnit = 1e12;

struct ModelPrice {
  std::int64_t input_micro_per_1m = 0;
  std::int64_t output_micro_per_1m = 0;
};

// {model: {input_per_1m, output_per_1m}}, prices in currency units.
class PricingSpec {
 public:
  PricingSpec() = default;
  explicit PricingSpec(std::map<std::string, ModelPrice> prices);

  static PricingSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  bool contains(const std::string& model) const {
    return prices_.count(model) > 0;
  }
  // Throws ConfigError for a model without an entry.
  const ModelPrice& at(const std::string& model) const;

 private:
  std::map<std::string, ModelPrice> prices_;
};

// Throws MissingInputError / ConfigError.
PricingSpec load_pricing(const std::string& path);

// Thinking tokens are billed at the output rate. Throws std::overflow_error.
PicoMoney compute_cost_pico(const UsageRecord& usage, const ModelPrice& price);
// Currency units. Throws ConfigError if `model` has no pricing entry.
double compute_cost(const UsageRecord& usage, const PricingSpec& pricing,
                    const std::string& model);
double pico_to_currency(PicoMoney amount);

// Accumulated cost per model. Safe for concurrent use.
class CostLedger {
 public:
  void add(const std::string& model, const UsageRecord& usage,
           const ModelPrice& price);
  void merge(const CostLedger& other);

  PicoMoney total_pico(const std::string& model) const;
  PicoMoney total_pico() const;
  std::uint64_t requests(const std::string& model) const;
  std::vector<std::string> models() const;
  nlohmann::json to_json() const;

 private:
  struct Entry {
    PicoMoney cost = 0;
    std::uint64_t requests = 0;
    UsageRecord usage;
  };
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

}  // namespace tiereval

#endif  // TIEREVAL_GATEWAY_HPP_
