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

#include "hetflow/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "hetflow/digest.hpp"

namespace hetflow {

using json = nlohmann::json;

std::string_view to_string(Purpose p) {
    switch (p) {
        case Purpose::kTaskNode: return "task_node";
        case Purpose::kMetaReflect: return "meta_reflect";
        case Purpose::kMetaGenerate: return "meta_generate";
    }
    return "task_node";
}

Purpose purpose_from_string(std::string_view s) {
    if (s == "task_node") return Purpose::kTaskNode;
    if (s == "meta_reflect") return Purpose::kMetaReflect;
    if (s == "meta_generate") return Purpose::kMetaGenerate;
    throw std::invalid_argument("unknown purpose '" + std::string(s) + "'");
}

std::string_view to_string(BackendError::Kind kind) {
    switch (kind) {
        case BackendError::Kind::kTransport: return "transport";
        case BackendError::Kind::kRateLimit: return "rate_limit";
        case BackendError::Kind::kUnknownModel: return "unknown_model";
        case BackendError::Kind::kReplayMiss: return "replay_miss";
        case BackendError::Kind::kScriptMiss: return "script_miss";
        case BackendError::Kind::kBadRequest: return "bad_request";
        case BackendError::Kind::kBadResponse: return "bad_response";
    }
    return "unknown";
}

namespace {

BackendError::Kind error_kind_from_string(std::string_view s) {
    for (auto k : {BackendError::Kind::kTransport, BackendError::Kind::kRateLimit,
                   BackendError::Kind::kUnknownModel, BackendError::Kind::kReplayMiss,
                   BackendError::Kind::kScriptMiss, BackendError::Kind::kBadRequest,
                   BackendError::Kind::kBadResponse})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown backend error kind '" + std::string(s) + "'");
}

}  // namespace

BackendError::BackendError(Kind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void check_request(const LlmRequest& request) {
    if (!(request.temperature >= 0.0 && request.temperature <= 1.0))
        throw std::invalid_argument("LlmRequest: temperature outside [0, 1]");
    if (request.prompt.empty()) throw std::invalid_argument("LlmRequest: empty prompt");
}

// ---------------------------------------------------------------------------

CostTable::CostTable(std::map<std::string, ModelPrice> prices) : prices_(std::move(prices)) {
    for (const auto& [model, p] : prices_)
        if (!(p.input_per_1k >= 0.0) || !(p.output_per_1k >= 0.0))
            throw std::invalid_argument("CostTable: negative price for " + model);
}

CostTable CostTable::from_json(const json& j) {
    std::map<std::string, ModelPrice> prices;
    for (const auto& [model, p] : j.items())
        prices[model] = ModelPrice{p.at("input_per_1k").get<double>(), p.at("output_per_1k").get<double>()};
    return CostTable(std::move(prices));
}

json CostTable::to_json() const {
    json j = json::object();
    for (const auto& [model, p] : prices_)
        j[model] = {{"input_per_1k", p.input_per_1k}, {"output_per_1k", p.output_per_1k}};
    return j;
}

void CostTable::set(const std::string& model, ModelPrice price) {
    if (!(price.input_per_1k >= 0.0) || !(price.output_per_1k >= 0.0))
        throw std::invalid_argument("CostTable: negative price for " + model);
    prices_[model] = price;
}

const ModelPrice& CostTable::price(const std::string& model) const {
    auto it = prices_.find(model);
    if (it == prices_.end())
        throw BackendError(BackendError::Kind::kUnknownModel, "no price for model '" + model + "'");
    return it->second;
}

double cost_of(const LlmResponse& response, const std::string& model, const CostTable& table) {
    const ModelPrice& p = table.price(model);
    return static_cast<double>(response.prompt_tokens) / 1000.0 * p.input_per_1k +
           static_cast<double>(response.completion_tokens) / 1000.0 * p.output_per_1k;
}

std::int64_t word_count(std::string_view text) {
    std::int64_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules) {
    rules_.reserve(rules.size());
    for (auto& r : rules) {
        std::regex re(r.pattern, std::regex::ECMAScript);
        rules_.push_back({std::move(r), std::move(re)});
    }
}

ScriptedBackend ScriptedBackend::from_json(const json& script) {
    std::vector<ScriptRule> rules;
    for (const auto& jr : script.at("rules")) {
        ScriptRule r;
        if (jr.contains("purpose") && !jr["purpose"].is_null())
            r.purpose = purpose_from_string(jr["purpose"].get<std::string>());
        r.pattern = jr.value("match", std::string(".*"));
        r.response = jr.value("response", std::string());
        r.echo = jr.value("echo", false);
        r.substitute = jr.value("substitute", false);
        r.wall_time = jr.value("wall_time", 0.0);
        if (jr.contains("fail")) r.fail = error_kind_from_string(jr["fail"].get<std::string>());
        rules.push_back(std::move(r));
    }
    return ScriptedBackend(std::move(rules));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open script " + path.string());
    return from_json(json::parse(in));
}

LlmResponse ScriptedBackend::complete(const LlmRequest& request) {
    check_request(request);
    for (const auto& c : rules_) {
        if (c.rule.purpose && *c.rule.purpose != request.purpose) continue;
        std::smatch m;
        if (!std::regex_search(request.prompt, m, c.regex)) continue;
        if (c.rule.fail) throw BackendError(*c.rule.fail, "scripted failure");
        LlmResponse r;
        if (c.rule.echo)
            r.text = request.prompt;
        else if (c.rule.substitute)
            r.text = m.format(c.rule.response);
        else
            r.text = c.rule.response;
        r.prompt_tokens = word_count(request.prompt);
        r.completion_tokens = word_count(r.text);
        r.wall_time = c.rule.wall_time;
        return r;
    }
    throw BackendError(BackendError::Kind::kScriptMiss,
                       "no scripted rule for " + std::string(to_string(request.purpose)) + " prompt");
}

// ---------------------------------------------------------------------------

json request_to_json(const LlmRequest& request) {
    return json{{"model", request.model},
                {"prompt", request.prompt},
                {"temperature", request.temperature},
                {"purpose", to_string(request.purpose)}};
}

json response_to_json(const LlmResponse& r) {
    return json{{"text", r.text},
                {"prompt_tokens", r.prompt_tokens},
                {"completion_tokens", r.completion_tokens},
                {"wall_time", r.wall_time}};
}

LlmResponse response_from_json(const json& j) {
    LlmResponse r;
    r.text = j.at("text").get<std::string>();
    r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
    r.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
    r.wall_time = j.at("wall_time").get<double>();
    return r;
}

std::string request_digest(const LlmRequest& request) { return sha256_hex(request_to_json(request).dump()); }

ReplayBackend::ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}

LlmResponse ReplayBackend::complete(const LlmRequest& request) {
    check_request(request);
    const std::string digest = request_digest(request);
    std::ifstream in(dir_ / (digest + ".json"));
    if (!in) throw BackendError(BackendError::Kind::kReplayMiss, "no fixture " + digest);
    json fixture;
    try {
        fixture = json::parse(in);
    } catch (const json::exception& e) {
        throw BackendError(BackendError::Kind::kBadResponse, "corrupt fixture " + digest + ": " + e.what());
    }
    if (fixture.at("request") != request_to_json(request))
        throw BackendError(BackendError::Kind::kReplayMiss, "fixture " + digest + " records a different request");
    return response_from_json(fixture.at("response"));
}

RecordingBackend::RecordingBackend(Backend& inner, std::filesystem::path dir)
    : inner_(inner), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

LlmResponse RecordingBackend::complete(const LlmRequest& request) {
    LlmResponse r = inner_.complete(request);
    const std::string digest = request_digest(request);
    json fixture{{"request", request_to_json(request)}, {"response", response_to_json(r)}};
    std::lock_guard lock(mu_);
    const auto tmp = dir_ / (digest + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << fixture.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, dir_ / (digest + ".json"));
    return r;
}

// ---------------------------------------------------------------------------

RetryingBackend::RetryingBackend(Backend& inner, RetryPolicy policy, Sleeper sleeper)
    : inner_(inner), policy_(policy), sleeper_(std::move(sleeper)) {
    if (policy_.max_attempts < 1) throw std::invalid_argument("RetryPolicy: max_attempts < 1");
    if (!sleeper_)
        sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

LlmResponse RetryingBackend::complete(const LlmRequest& request) {
    double backoff = policy_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return inner_.complete(request);
        } catch (const BackendError& e) {
            if (!e.retryable() || attempt >= policy_.max_attempts) throw;
        }
        sleeper_(backoff);
        backoff = std::min(backoff * policy_.multiplier, policy_.max_backoff);
    }
}

// ---------------------------------------------------------------------------

json chat_request_body(const LlmRequest& request) {
    return json{{"model", request.model},
                {"temperature", request.temperature},
                {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})}};
}

LlmResponse parse_chat_response(std::string_view body, double wall_time) {
    try {
        json j = json::parse(body.begin(), body.end());
        LlmResponse r;
        const json& message = j.at("choices").at(0).at("message");
        r.text = message.at("content").is_null() ? std::string() : message.at("content").get<std::string>();
        if (j.contains("usage")) {
            r.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            r.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        r.wall_time = wall_time;
        return r;
    } catch (const json::exception& e) {
        throw BackendError(BackendError::Kind::kBadResponse, e.what());
    }
}

}  // namespace hetflow
