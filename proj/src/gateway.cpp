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

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "tiereval/errors.hpp"

namespace tiereval {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::int64_t approx_tokens(std::size_t bytes) {
  return static_cast<std::int64_t>((bytes + 3) / 4);
}

std::string image_mime(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/jpeg";
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint '" + url + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    e.prefix = url.substr(path_start);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  }
  return e;
}

struct HttpOutcome {
  std::optional<int> status;
  std::string body;
  httplib::Error error = httplib::Error::Success;
};

HttpOutcome post_json(const ProviderConfig& config, const std::string& path,
                      const nlohmann::json& body, const httplib::Headers& headers) {
  const Endpoint ep = split_endpoint(config.endpoint);
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.request_timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      config.request_timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  auto res = client.Post(ep.prefix + path, headers, body.dump(), "application/json");
  HttpOutcome out;
  out.error = res.error();
  if (res) {
    out.status = res->status;
    out.body = res->body;
  }
  return out;
}

// Maps transport-level failures and HTTP error statuses to an attempt
// result. Returns nullopt for a 2xx response.
std::optional<AttemptResult> classify_http(const HttpOutcome& http) {
  AttemptResult r;
  if (!http.status) {
    r.status = http.error == httplib::Error::Read ||
                       http.error == httplib::Error::ConnectionTimeout
                   ? ResponseStatus::kTimeout
                   : ResponseStatus::kTransportError;
    r.error = "http: " + httplib::to_string(http.error);
    return r;
  }
  const int code = *http.status;
  if (code >= 200 && code < 300) return std::nullopt;
  r.status = code == 408 ? ResponseStatus::kTimeout : ResponseStatus::kTransportError;
  r.error = "http status " + std::to_string(code) + ": " + http.body.substr(0, 500);
  r.retryable = code == 408 || code == 429 || code >= 500;
  return r;
}

AttemptResult read_image(const Request& request, std::string* b64) {
  AttemptResult r;
  const auto bytes = read_file(request.image_path);
  if (!bytes) {
    r.error = "cannot read image '" + request.image_path + "'";
    r.retryable = false;
    return r;
  }
  *b64 = base64_encode(*bytes);
  r.status = ResponseStatus::kOk;
  return r;
}

std::int64_t json_int(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number()) return 0;
  return j[key].get<std::int64_t>();
}

}  // namespace

std::string_view adapter_name(AdapterKind kind) {
  switch (kind) {
    case AdapterKind::kMock:
      return "mock";
    case AdapterKind::kOpenAI:
      return "openai";
    case AdapterKind::kGemini:
      return "gemini";
  }
  return "mock";
}

AdapterKind parse_adapter(std::string_view name) {
  if (name == "mock") return AdapterKind::kMock;
  if (name == "openai") return AdapterKind::kOpenAI;
  if (name == "gemini") return AdapterKind::kGemini;
  throw ConfigError("unknown adapter '" + std::string(name) + "'");
}

void ProviderConfig::validate() const {
  if (provider_id.empty()) throw ConfigError("provider_id must be set");
  const std::string who = "provider '" + provider_id + "': ";
  if (thinking_budget_tokens && *thinking_budget_tokens < 0) {
    throw ConfigError(who + "thinking_budget_tokens must be >= 0");
  }
  if (max_retries < 0) throw ConfigError(who + "max_retries must be >= 0");
  if (max_in_flight == 0) throw ConfigError(who + "max_in_flight must be >= 1");
  if (max_requests_per_second < 0.0) {
    throw ConfigError(who + "max_requests_per_second must be >= 0");
  }
  if (backoff_multiplier < 1.0) throw ConfigError(who + "backoff_multiplier must be >= 1");
  if (backoff_initial.count() < 0 || request_timeout.count() <= 0) {
    throw ConfigError(who + "durations must be positive");
  }
  if (adapter == AdapterKind::kMock) {
    if (mock_dir.empty()) throw ConfigError(who + "mock adapter needs mock_dir");
  } else {
    if (endpoint.empty()) throw ConfigError(who + "endpoint must be set");
    if (model_name.empty()) throw ConfigError(who + "model_name must be set");
    if (auth_env.empty()) throw ConfigError(who + "auth_env must be set");
  }
  if (adapter == AdapterKind::kOpenAI && thinking_budget_tokens) {
    throw ConfigError(who + "the openai adapter has no thinking budget parameter");
  }
}

ProviderConfig provider_from_json(const nlohmann::json& j,
                                  const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("provider entry must be an object");
  try {
    ProviderConfig c;
    c.provider_id = j.at("provider_id").get<std::string>();
    c.adapter = parse_adapter(j.value("adapter", std::string("mock")));
    c.endpoint = j.value("endpoint", std::string());
    c.model_name = j.value("model_name", c.provider_id);
    c.auth_env = j.value("auth_env", std::string());
    if (j.contains("thinking_budget_tokens") && !j["thinking_budget_tokens"].is_null()) {
      c.thinking_budget_tokens = j["thinking_budget_tokens"].get<std::int64_t>();
    }
    if (j.contains("temperature") && !j["temperature"].is_null()) {
      c.temperature = j["temperature"].get<double>();
    }
    c.max_retries = j.value("max_retries", c.max_retries);
    c.request_timeout = std::chrono::milliseconds(
        j.value("request_timeout_ms", static_cast<std::int64_t>(c.request_timeout.count())));
    c.backoff_initial = std::chrono::milliseconds(
        j.value("backoff_initial_ms", static_cast<std::int64_t>(c.backoff_initial.count())));
    c.backoff_multiplier = j.value("backoff_multiplier", c.backoff_multiplier);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.max_requests_per_second = j.value("max_requests_per_second", 0.0);
    c.mock_dir = j.value("mock_dir", std::string());
    if (!c.mock_dir.empty() && fs::path(c.mock_dir).is_relative() && !base_dir.empty()) {
      c.mock_dir = (fs::path(base_dir) / c.mock_dir).lexically_normal().string();
    }
    c.display_name = j.value("display_name", c.provider_id);
    c.group = j.value("group", std::string());
    c.vendor = j.value("vendor", std::string());
    c.variant = j.value("variant", std::string());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("provider entry: ") + e.what());
  }
}

nlohmann::json to_json(const ProviderConfig& c) {
  nlohmann::json j = {
      {"provider_id", c.provider_id},
      {"adapter", adapter_name(c.adapter)},
      {"endpoint", c.endpoint},
      {"model_name", c.model_name},
      {"auth_env", c.auth_env},
      {"thinking_budget_tokens", nullptr},
      {"temperature", nullptr},
      {"max_retries", c.max_retries},
      {"request_timeout_ms", c.request_timeout.count()},
      {"backoff_initial_ms", c.backoff_initial.count()},
      {"backoff_multiplier", c.backoff_multiplier},
      {"max_in_flight", c.max_in_flight},
      {"max_requests_per_second", c.max_requests_per_second},
      {"mock_dir", c.mock_dir},
      {"display_name", c.display_name},
      {"group", c.group},
      {"vendor", c.vendor},
      {"variant", c.variant},
  };
  if (c.thinking_budget_tokens) j["thinking_budget_tokens"] = *c.thinking_budget_tokens;
  if (c.temperature) j["temperature"] = *c.temperature;
  return j;
}

std::string provider_digest(const ProviderConfig& config) {
  return sha256_hex(to_json(config).dump());
}

std::string_view status_name(ResponseStatus status) {
  switch (status) {
    case ResponseStatus::kOk:
      return "ok";
    case ResponseStatus::kSafetyBlocked:
      return "safety_blocked";
    case ResponseStatus::kTransportError:
      return "transport_error";
    case ResponseStatus::kTimeout:
      return "timeout";
  }
  return "transport_error";
}

ResponseStatus parse_status(std::string_view name) {
  if (name == "ok") return ResponseStatus::kOk;
  if (name == "safety_blocked") return ResponseStatus::kSafetyBlocked;
  if (name == "transport_error") return ResponseStatus::kTransportError;
  if (name == "timeout") return ResponseStatus::kTimeout;
  throw DataError("unknown response status '" + std::string(name) + "'");
}

UsageRecord& UsageRecord::operator+=(const UsageRecord& other) {
  input_tokens += other.input_tokens;
  output_tokens += other.output_tokens;
  if (other.thinking_tokens) {
    thinking_tokens = thinking_tokens.value_or(0) + *other.thinking_tokens;
  }
  return *this;
}

nlohmann::json to_json(const ResponseEnvelope& e) {
  nlohmann::json usage = {{"input_tokens", e.usage.input_tokens},
                          {"output_tokens", e.usage.output_tokens}};
  if (e.usage.thinking_tokens) usage["thinking_tokens"] = *e.usage.thinking_tokens;
  nlohmann::json j = {{"sample_id", e.sample_id},
                      {"model", e.model},
                      {"prompt_hash", e.prompt_hash},
                      {"status", status_name(e.status)},
                      {"usage", usage},
                      {"latency_ms", e.latency.count()},
                      {"attempts", e.attempts}};
  if (e.raw_text) j["raw_text"] = *e.raw_text;
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

ResponseEnvelope envelope_from_json(const nlohmann::json& j) {
  try {
    ResponseEnvelope e;
    e.sample_id = j.at("sample_id").get<std::string>();
    e.model = j.at("model").get<std::string>();
    e.prompt_hash = j.value("prompt_hash", std::string());
    e.status = parse_status(j.at("status").get<std::string>());
    if (j.contains("raw_text") && j["raw_text"].is_string()) {
      e.raw_text = j["raw_text"].get<std::string>();
    }
    if (j.contains("usage")) {
      const auto& u = j["usage"];
      e.usage.input_tokens = u.value("input_tokens", std::int64_t{0});
      e.usage.output_tokens = u.value("output_tokens", std::int64_t{0});
      if (u.contains("thinking_tokens")) {
        e.usage.thinking_tokens = u["thinking_tokens"].get<std::int64_t>();
      }
    }
    e.latency = std::chrono::milliseconds(j.value("latency_ms", std::int64_t{0}));
    e.attempts = j.value("attempts", 0);
    e.error = j.value("error", std::string());
    if (e.raw_text.has_value() != (e.status == ResponseStatus::kOk)) {
      throw DataError("envelope for '" + e.sample_id +
                      "': raw_text must be present exactly when status is ok");
    }
    if (e.usage.input_tokens < 0 || e.usage.output_tokens < 0 ||
        e.usage.thinking_tokens.value_or(0) < 0) {
      throw DataError("envelope for '" + e.sample_id + "': negative token count");
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad envelope: ") + ex.what());
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string base64_encode(std::string_view data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string prompt_hash(const Request& request) {
  std::string material = request.system_prompt;
  material.push_back('\x1f');
  material += request.description;
  return sha256_hex(material);
}

MockAdapter::MockAdapter(std::string dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) {
    throw MissingInputError("mock response directory '" + dir_ + "' does not exist");
  }
}

AttemptResult MockAdapter::attempt(const Request& request) {
  const fs::path base = fs::path(dir_);
  AttemptResult r;
  r.usage.input_tokens =
      approx_tokens(request.system_prompt.size() + request.description.size());
  if (fs::exists(base / (request.sample_id + ".blocked"))) {
    r.status = ResponseStatus::kSafetyBlocked;
    r.error = "blocked by content filter";
    r.usage.output_tokens = 0;
    return r;
  }
  if (const auto fail = read_file(base / (request.sample_id + ".fail"))) {
    const int limit = std::atoi(fail->c_str());
    std::lock_guard<std::mutex> lock(mu_);
    int& seen = failures_seen_[request.sample_id];
    if (seen < limit) {
      ++seen;
      r.status = ResponseStatus::kTimeout;
      r.error = "mock timeout";
      r.usage = {};
      return r;
    }
  }
  auto text = read_file(base / (request.sample_id + ".txt"));
  if (!text) text = read_file(base / "default.txt");
  if (!text) {
    r.status = ResponseStatus::kTransportError;
    r.error = "no canned response for '" + request.sample_id + "'";
    r.retryable = false;
    r.usage = {};
    return r;
  }
  r.status = ResponseStatus::kOk;
  r.usage.output_tokens = approx_tokens(text->size());
  r.raw_text = std::move(*text);
  return r;
}

OpenAIAdapter::OpenAIAdapter(ProviderConfig config, std::string api_key)
    : config_(std::move(config)), api_key_(std::move(api_key)) {}

nlohmann::json OpenAIAdapter::build_payload(const Request& request,
                                            std::string_view image_b64) const {
  nlohmann::json user_content = nlohmann::json::array();
  user_content.push_back({{"type", "text"}, {"text", request.description}});
  user_content.push_back(
      {{"type", "image_url"},
       {"image_url",
        {{"url", "data:" + image_mime(request.image_path) + ";base64," +
                     std::string(image_b64)}}}});
  nlohmann::json payload = {
      {"model", config_.model_name},
      {"messages",
       {{{"role", "system"}, {"content", request.system_prompt}},
        {{"role", "user"}, {"content", user_content}}}}};
  if (config_.temperature) payload["temperature"] = *config_.temperature;
  return payload;
}

AttemptResult OpenAIAdapter::attempt(const Request& request) {
  std::string b64;
  AttemptResult img = read_image(request, &b64);
  if (img.status != ResponseStatus::kOk) return img;
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  const HttpOutcome http =
      post_json(config_, "/v1/chat/completions", build_payload(request, b64), headers);
  if (auto failed = classify_http(http)) return *failed;

  AttemptResult r;
  const auto body = nlohmann::json::parse(http.body, nullptr, false);
  if (body.is_discarded() || !body.contains("choices") || body["choices"].empty()) {
    r.error = "malformed provider response";
    return r;
  }
  if (body.contains("usage")) {
    const auto& u = body["usage"];
    const std::int64_t completion = json_int(u, "completion_tokens");
    std::int64_t reasoning = 0;
    if (u.contains("completion_tokens_details")) {
      reasoning = json_int(u["completion_tokens_details"], "reasoning_tokens");
    }
    r.usage.input_tokens = json_int(u, "prompt_tokens");
    r.usage.output_tokens = completion - reasoning;
    if (reasoning > 0) r.usage.thinking_tokens = reasoning;
  }
  const auto& choice = body["choices"][0];
  if (choice.value("finish_reason", std::string()) == "content_filter") {
    r.status = ResponseStatus::kSafetyBlocked;
    r.error = "content_filter";
    return r;
  }
  const auto& message = choice.value("message", nlohmann::json::object());
  if (message.contains("refusal") && message["refusal"].is_string()) {
    r.status = ResponseStatus::kSafetyBlocked;
    r.error = message["refusal"].get<std::string>();
    return r;
  }
  if (!message.contains("content") || !message["content"].is_string()) {
    r.error = "response without text content";
    return r;
  }
  r.status = ResponseStatus::kOk;
  r.raw_text = message["content"].get<std::string>();
  return r;
}

GeminiAdapter::GeminiAdapter(ProviderConfig config, std::string api_key)
    : config_(std::move(config)), api_key_(std::move(api_key)) {}

nlohmann::json GeminiAdapter::build_payload(const Request& request,
                                            std::string_view image_b64) const {
  nlohmann::json payload = {
      {"systemInstruction", {{"parts", {{{"text", request.system_prompt}}}}}},
      {"contents",
       {{{"role", "user"},
         {"parts",
          {{{"text", request.description}},
           {{"inline_data",
             {{"mime_type", image_mime(request.image_path)},
              {"data", std::string(image_b64)}}}}}}}}}};
  nlohmann::json generation = nlohmann::json::object();
  if (config_.temperature) generation["temperature"] = *config_.temperature;
  if (config_.thinking_budget_tokens) {
    generation["thinkingConfig"] = {{"thinkingBudget", *config_.thinking_budget_tokens}};
  }
  if (!generation.empty()) payload["generationConfig"] = generation;
  return payload;
}

AttemptResult GeminiAdapter::attempt(const Request& request) {
  std::string b64;
  AttemptResult img = read_image(request, &b64);
  if (img.status != ResponseStatus::kOk) return img;
  const httplib::Headers headers = {{"x-goog-api-key", api_key_}};
  const HttpOutcome http =
      post_json(config_, "/v1beta/models/" + config_.model_name + ":generateContent",
                build_payload(request, b64), headers);
  if (auto failed = classify_http(http)) return *failed;

  AttemptResult r;
  const auto body = nlohmann::json::parse(http.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    r.error = "malformed provider response";
    return r;
  }
  if (body.contains("usageMetadata")) {
    const auto& u = body["usageMetadata"];
    r.usage.input_tokens = json_int(u, "promptTokenCount");
    r.usage.output_tokens = json_int(u, "candidatesTokenCount");
    if (u.contains("thoughtsTokenCount")) {
      r.usage.thinking_tokens = json_int(u, "thoughtsTokenCount");
    }
  }
  if (body.contains("promptFeedback") && body["promptFeedback"].contains("blockReason")) {
    r.status = ResponseStatus::kSafetyBlocked;
    r.error = body["promptFeedback"]["blockReason"].dump();
    return r;
  }
  if (!body.contains("candidates") || body["candidates"].empty()) {
    r.error = "response without candidates";
    return r;
  }
  const auto& cand = body["candidates"][0];
  const std::string finish = cand.value("finishReason", std::string());
  if (finish == "SAFETY" || finish == "PROHIBITED_CONTENT" || finish == "BLOCKLIST" ||
      finish == "IMAGE_SAFETY" || finish == "SPII") {
    r.status = ResponseStatus::kSafetyBlocked;
    r.error = finish;
    return r;
  }
  std::string text;
  if (cand.contains("content") && cand["content"].contains("parts")) {
    for (const auto& part : cand["content"]["parts"]) {
      if (part.value("thought", false)) continue;
      if (part.contains("text") && part["text"].is_string()) {
        text += part["text"].get<std::string>();
      }
    }
  }
  if (text.empty()) {
    r.error = "response without text (finishReason " + finish + ")";
    return r;
  }
  r.status = ResponseStatus::kOk;
  r.raw_text = std::move(text);
  return r;
}

std::unique_ptr<ProviderAdapter> make_adapter(const ProviderConfig& config) {
  config.validate();
  if (config.adapter == AdapterKind::kMock) {
    return std::make_unique<MockAdapter>(config.mock_dir);
  }
  const char* key = std::getenv(config.auth_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("provider '" + config.provider_id +
                      "': environment variable " + config.auth_env + " is not set");
  }
  if (config.adapter == AdapterKind::kOpenAI) {
    return std::make_unique<OpenAIAdapter>(config, key);
  }
  return std::make_unique<GeminiAdapter>(config, key);
}

void real_sleep(std::chrono::milliseconds duration) {
  std::this_thread::sleep_for(duration);
}

ResponseEnvelope submit(const Request& request, const ProviderConfig& config,
                        ProviderAdapter& adapter, const Sleeper& sleeper) {
  ResponseEnvelope env;
  env.sample_id = request.sample_id;
  env.model = config.provider_id;
  env.prompt_hash = prompt_hash(request);
  const auto start = Clock::now();
  const int max_attempts = 1 + config.max_retries;
  double backoff = static_cast<double>(config.backoff_initial.count());
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    AttemptResult r;
    try {
      r = adapter.attempt(request);
    } catch (const std::exception& e) {
      r.status = ResponseStatus::kTransportError;
      r.error = e.what();
    }
    env.attempts = attempt;
    env.usage += r.usage;
    env.status = r.status;
    env.error = r.error;
    if (r.status == ResponseStatus::kOk) {
      env.raw_text = std::move(r.raw_text);
      env.error.clear();
      break;
    }
    if (r.status == ResponseStatus::kSafetyBlocked || !r.retryable) break;
    if (attempt < max_attempts) {
      sleeper(std::chrono::milliseconds(static_cast<std::int64_t>(backoff)));
      backoff *= config.backoff_multiplier;
    }
  }
  env.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  return env;
}

namespace {

std::string cache_key(const std::string& model, const std::string& sample_id,
                      const std::string& hash) {
  return model + '\x1f' + sample_id + '\x1f' + hash;
}

}  // namespace

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw DataError(path_ + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    ResponseEnvelope e;
    try {
      e = envelope_from_json(j);
    } catch (const DataError& err) {
      throw DataError(path_ + ":" + std::to_string(lineno) + ": " + err.what());
    }
    const std::size_t idx = entries_.size();
    by_key_[cache_key(e.model, e.sample_id, e.prompt_hash)] = idx;
    by_sample_[cache_key(e.model, e.sample_id, "")] = idx;
    entries_.push_back(std::move(e));
  }
}

std::optional<ResponseEnvelope> ResponseCache::find(const std::string& model,
                                                    const std::string& sample_id,
                                                    const std::string& hash) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = by_key_.find(cache_key(model, sample_id, hash));
  if (it == by_key_.end()) return std::nullopt;
  return entries_[it->second];
}

std::optional<ResponseEnvelope> ResponseCache::latest(const std::string& model,
                                                      const std::string& sample_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = by_sample_.find(cache_key(model, sample_id, ""));
  if (it == by_sample_.end()) return std::nullopt;
  return entries_[it->second];
}

void ResponseCache::append(const ResponseEnvelope& envelope) {
  const std::string line = to_json(envelope).dump();
  std::lock_guard<std::mutex> lock(mu_);
  const fs::path parent = fs::path(path_).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw MissingInputError("cannot append to cache '" + path_ + "'");
  out << line << '\n';
  out.flush();
  const std::size_t idx = entries_.size();
  by_key_[cache_key(envelope.model, envelope.sample_id, envelope.prompt_hash)] = idx;
  by_sample_[cache_key(envelope.model, envelope.sample_id, "")] = idx;
  entries_.push_back(envelope);
}

std::vector<ResponseEnvelope> ResponseCache::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

std::size_t ResponseCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

BatchResult run_batch(std::span<const Request> requests,
                      const ProviderConfig& config, ProviderAdapter& adapter,
                      ResponseCache* cache, InFlightProbe* probe,
                      const Sleeper& sleeper) {
  BatchResult result;
  result.envelopes.resize(requests.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (cache != nullptr) {
      auto hit = cache->find(config.provider_id, requests[i].sample_id,
                             prompt_hash(requests[i]));
      if (hit && (hit->status == ResponseStatus::kOk ||
                  hit->status == ResponseStatus::kSafetyBlocked)) {
        result.envelopes[i] = std::move(*hit);
        ++result.from_cache;
        continue;
      }
    }
    pending.push_back(i);
  }
  result.submitted = pending.size();
  if (pending.empty()) return result;

  std::atomic<std::size_t> next{0};
  std::mutex rate_mu;
  Clock::time_point next_start = Clock::now();
  const auto interval =
      config.max_requests_per_second > 0.0
          ? std::chrono::duration_cast<Clock::duration>(
                std::chrono::duration<double>(1.0 / config.max_requests_per_second))
          : Clock::duration::zero();

  auto worker = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      const std::size_t i = pending[slot];
      if (interval > Clock::duration::zero()) {
        Clock::time_point start;
        {
          std::lock_guard<std::mutex> lock(rate_mu);
          start = std::max(next_start, Clock::now());
          next_start = start + interval;
        }
        std::this_thread::sleep_until(start);
      }
      if (probe != nullptr) {
        const std::size_t now = probe->current.fetch_add(1) + 1;
        probe->started.fetch_add(1);
        std::size_t peak = probe->peak.load();
        while (now > peak && !probe->peak.compare_exchange_weak(peak, now)) {
        }
      }
      ResponseEnvelope env = submit(requests[i], config, adapter, sleeper);
      if (probe != nullptr) probe->current.fetch_sub(1);
      if (cache != nullptr) cache->append(env);
      result.envelopes[i] = std::move(env);
    }
  };

  const std::size_t threads = std::min(config.max_in_flight, pending.size());
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  return result;
}

PricingSpec::PricingSpec(std::map<std::string, ModelPrice> prices)
    : prices_(std::move(prices)) {
  for (const auto& [model, p] : prices_) {
    if (p.input_micro_per_1m < 0 || p.output_micro_per_1m < 0) {
      throw ConfigError("negative price for model '" + model + "'");
    }
  }
}

PricingSpec PricingSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("pricing must be an object");
  std::map<std::string, ModelPrice> prices;
  auto to_micro = [](const nlohmann::json& v, const std::string& what) {
    if (!v.is_number()) throw ConfigError(what + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < 0.0) throw ConfigError(what + " must be >= 0");
    return static_cast<std::int64_t>(std::llround(x * 1e6));
  };
  for (const auto& [model, entry] : j.items()) {
    if (!entry.is_object() || !entry.contains("input_per_1m") ||
        !entry.contains("output_per_1m")) {
      throw ConfigError("pricing for '" + model +
                        "' needs input_per_1m and output_per_1m");
    }
    prices[model] = {to_micro(entry["input_per_1m"], model + ".input_per_1m"),
                     to_micro(entry["output_per_1m"], model + ".output_per_1m")};
  }
  return PricingSpec(std::move(prices));
}

nlohmann::json PricingSpec::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [model, p] : prices_) {
    j[model] = {{"input_per_1m", static_cast<double>(p.input_micro_per_1m) / 1e6},
                {"output_per_1m", static_cast<double>(p.output_micro_per_1m) / 1e6}};
  }
  return j;
}

const ModelPrice& PricingSpec::at(const std::string& model) const {
  const auto it = prices_.find(model);
  if (it == prices_.end()) {
    throw ConfigError("no pricing entry for model '" + model + "'");
  }
  return it->second;
}

PricingSpec load_pricing(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("pricing file '" + path + "' not found");
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("pricing file '" + path + "' is not JSON");
  return PricingSpec::from_json(j);
}

PicoMoney compute_cost_pico(const UsageRecord& usage, const ModelPrice& price) {
  if (usage.input_tokens < 0 || usage.output_tokens < 0 ||
      usage.thinking_tokens.value_or(0) < 0) {
    throw std::invalid_argument("negative token count");
  }
  std::int64_t out_tokens = 0, in_cost = 0, out_cost = 0, total = 0;
  if (__builtin_add_overflow(usage.output_tokens, usage.thinking_tokens.value_or(0),
                             &out_tokens) ||
      __builtin_mul_overflow(usage.input_tokens, price.input_micro_per_1m, &in_cost) ||
      __builtin_mul_overflow(out_tokens, price.output_micro_per_1m, &out_cost) ||
      __builtin_add_overflow(in_cost, out_cost, &total)) {
    throw std::overflow_error("cost exceeds the fixed-point range");
  }
  return total;
}

double compute_cost(const UsageRecord& usage, const PricingSpec& pricing,
                    const std::string& model) {
  return pico_to_currency(compute_cost_pico(usage, pricing.at(model)));
}

double pico_to_currency(PicoMoney amount) {
  return static_cast<double>(amount) / kPicoPerUnit;
}

void CostLedger::add(const std::string& model, const UsageRecord& usage,
                     const ModelPrice& price) {
  const PicoMoney cost = compute_cost_pico(usage, price);
  std::lock_guard<std::mutex> lock(mu_);
  Entry& e = entries_[model];
  if (__builtin_add_overflow(e.cost, cost, &e.cost)) {
    throw std::overflow_error("ledger total exceeds the fixed-point range");
  }
  ++e.requests;
  e.usage += usage;
}

void CostLedger::merge(const CostLedger& other) {
  std::map<std::string, Entry> copy;
  {
    std::lock_guard<std::mutex> lock(other.mu_);
    copy = other.entries_;
  }
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& [model, e] : copy) {
    Entry& mine = entries_[model];
    if (__builtin_add_overflow(mine.cost, e.cost, &mine.cost)) {
      throw std::overflow_error("ledger total exceeds the fixed-point range");
    }
    mine.requests += e.requests;
    mine.usage += e.usage;
  }
}

PicoMoney CostLedger::total_pico(const std::string& model) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = entries_.find(model);
  return it == entries_.end() ? 0 : it->second.cost;
}

PicoMoney CostLedger::total_pico() const {
  std::lock_guard<std::mutex> lock(mu_);
  PicoMoney sum = 0;
  for (const auto& [model, e] : entries_) sum += e.cost;
  return sum;
}

std::uint64_t CostLedger::requests(const std::string& model) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = entries_.find(model);
  return it == entries_.end() ? 0 : it->second.requests;
}

std::vector<std::string> CostLedger::models() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [model, e] : entries_) out.push_back(model);
  return out;
}

nlohmann::json CostLedger::to_json() const {
  std::lock_guard<std::mutex> lock(mu_);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [model, e] : entries_) {
    j[model] = {{"cost", pico_to_currency(e.cost)},
                {"cost_pico", e.cost},
                {"requests", e.requests},
                {"input_tokens", e.usage.input_tokens},
                {"output_tokens", e.usage.output_tokens},
                {"thinking_tokens", e.usage.thinking_tokens.value_or(0)}};
  }
  return j;
}

}  // namespace tiereval
