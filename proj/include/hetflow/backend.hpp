// Copyright 2026 The hetflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hetflow {

enum class Purpose { kTaskNode, kMetaReflect, kMetaGenerate };

std::string_view to_string(Purpose p);
Purpose purpose_from_string(std::string_view s);

struct LlmRequest {
    std::string model;
    std::string prompt;
    double temperature = 1.0;
    Purpose purpose = Purpose::kTaskNode;
};

struct LlmResponse {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double wall_time = 0.0;  // seconds

    friend bool operator==(const LlmResponse&, const LlmResponse&) = default;
};

class BackendError : public std::runtime_error {
public:
    enum class Kind {
        kTransport,
        kRateLimit,
        kUnknownModel,
        kReplayMiss,
        kScriptMiss,
        kBadRequest,
        kBadResponse,
    };

    BackendError(Kind kind, const std::string& message);

    Kind kind() const { return kind_; }
    bool retryable() const { return kind_ == Kind::kTransport || kind_ == Kind::kRateLimit; }

private:
    Kind kind_;
};

std::string_view to_string(BackendError::Kind kind);

/// Throws std::invalid_argument on out-of-range temperature or empty prompt.
void check_request(const LlmRequest& request);

class Backend {
public:
    virtual ~Backend() = default;
    virtual LlmResponse complete(const LlmRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Cost accounting

struct ModelPrice {
    double input_per_1k = 0.0;   // USD per 1000 prompt tokens
    double output_per_1k = 0.0;  // USD per 1000 completion tokens
};

class CostTable {
public:
    CostTable() = default;
    explicit CostTable(std::map<std::string, ModelPrice> prices);

    static CostTable from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    void set(const std::string& model, ModelPrice price);
    bool contains(const std::string& model) const { return prices_.count(model) != 0; }

    /// Throws BackendError(kUnknownModel).
    const ModelPrice& price(const std::string& model) const;

private:
    std::map<std::string, ModelPrice> prices_;
};

/// prompt_tokens/1000 * input price + completion_tokens/1000 * output price.
double cost_of(const LlmResponse& response, const std::string& model, const CostTable& table);

/// Whitespace-delimited word count; the scripted backend's token estimate.
std::int64_t word_count(std::string_view text);

// ---------------------------------------------------------------------------
// Scripted backend

/// One scripted reply. The first rule whose purpose (if set) equals the
/// request purpose and whose pattern is found in the prompt wins.
struct ScriptRule {
    std::optional<Purpose> purpose;
    std::string pattern = ".*";
    std::string response;
    bool echo = false;        // reply with the prompt itself
    bool substitute = false;  // treat response as a regex format string ($1, $&)
    double wall_time = 0.0;
    std::optional<BackendError::Kind> fail;  // raise instead of replying
};

/// Deterministic test backend. Pure: the reply depends only on the request.
/// Token counts are word counts of prompt and reply, which is a test-only
/// approximation of real tokenization.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptRule> rules);

    static ScriptedBackend from_json(const nlohmann::json& script);
    static ScriptedBackend from_file(const std::filesystem::path& path);

    LlmResponse complete(const LlmRequest& request) override;

private:
    struct Compiled {
        ScriptRule rule;
        std::regex regex;
    };
    std::vector<Compiled> rules_;
};

// ---------------------------------------------------------------------------
// Fixture store and replay

/// Digest identifying a request in the fixture store.
std::string request_digest(const LlmRequest& request);
nlohmann::json request_to_json(const LlmRequest& request);
nlohmann::json response_to_json(const LlmResponse& response);
LlmResponse response_from_json(const nlohmann::json& j);

/// Returns recorded responses from `<dir>/<request_digest>.json`.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(std::filesystem::path dir);
    LlmResponse complete(const LlmRequest& request) override;

private:
    std::filesystem::path dir_;
};

/// Forwards to an inner backend and writes each exchange to the fixture store.
class RecordingBackend final : public Backend {
public:
    RecordingBackend(Backend& inner, std::filesystem::path dir);
    LlmResponse complete(const LlmRequest& request) override;

private:
    Backend& inner_;
    std::filesystem::path dir_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
    int max_attempts = 4;
    double initial_backoff = 1.0;  // seconds
    double multiplier = 2.0;
    double max_backoff = 30.0;
};

/// Retries transport and rate-limit failures with exponential backoff; other
/// errors propagate immediately.
class RetryingBackend final : public Backend {
public:
    using Sleeper = std::function<void(double seconds)>;

    RetryingBackend(Backend& inner, RetryPolicy policy, Sleeper sleeper = {});
    LlmResponse complete(const LlmRequest& request) override;

private:
    Backend& inner_;
    RetryPolicy policy_;
    Sleeper sleeper_;
};

// ---------------------------------------------------------------------------
// Live HTTP backend

struct LiveConfig {
    std::string endpoint = "https://api.openai.com/v1";  // base URL; /chat/completions is appended
    std::string api_key_env = "OPENAI_API_KEY";
    int max_in_flight = 4;
    double timeout = 120.0;  // seconds
};

/// Chat-completions client. The API key is read from the environment variable
/// named in the config at construction.
class LiveBackend final : public Backend {
public:
    explicit LiveBackend(LiveConfig config);
    ~LiveBackend() override;

    LlmResponse complete(const LlmRequest& request) override;

private:
    LiveConfig config_;
    std::string api_key_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::counting_semaphore<1024> in_flight_;
};

/// Builds the chat-completions request body.
nlohmann::json chat_request_body(const LlmRequest& request);

/// Parses a chat-completions response body; throws BackendError(kBadResponse).
LlmResponse parse_chat_response(std::string_view body, double wall_time);

}  // namespace hetflow
