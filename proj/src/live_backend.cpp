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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "hetflow/backend.hpp"

namespace hetflow {

namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("LiveConfig: endpoint must include a scheme: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

struct SemaphoreGuard {
    std::counting_semaphore<1024>& sem;
    explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
};

}  // namespace

LiveBackend::LiveBackend(LiveConfig config)
    : config_(std::move(config)), in_flight_(std::max(1, std::min(config_.max_in_flight, 1024))) {
    std::tie(scheme_host_port_, path_prefix_) = split_endpoint(config_.endpoint);
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
}

LiveBackend::~LiveBackend() = default;

LlmResponse LiveBackend::complete(const LlmRequest& request) {
    check_request(request);
    SemaphoreGuard guard(in_flight_);

    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration<double>(config_.timeout);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers,
                           chat_request_body(request).dump(), "application/json");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!res) throw BackendError(BackendError::Kind::kTransport, httplib::to_string(res.error()));
    if (res->status == 429) throw BackendError(BackendError::Kind::kRateLimit, res->body);
    if (res->status >= 500)
        throw BackendError(BackendError::Kind::kTransport, "HTTP " + std::to_string(res->status));
    if (res->status == 404 && res->body.find("model") != std::string::npos)
        throw BackendError(BackendError::Kind::kUnknownModel, request.model);
    if (res->status < 200 || res->status >= 300)
        throw BackendError(BackendError::Kind::kBadRequest,
                           "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 512));
    return parse_chat_response(res->body, elapsed);
}

}  // namespace hetflow
