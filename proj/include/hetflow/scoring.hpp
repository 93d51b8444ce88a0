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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetflow/sandbox.hpp"

namespace hetflow {

enum class TaskMode { kMath, kCode };

struct TestCase {
    std::string input;
    std::string expected;
};

struct Task {
    std::string id;
    std::string query;
    TaskMode mode = TaskMode::kMath;
    std::string gold_answer;      // math mode
    std::vector<TestCase> tests;  // code mode
};

struct QueryMetrics {
    double score = 0.0;    // S_q in [0, 1]
    double cost = 0.0;     // C_q, USD
    double latency = 0.0;  // T_q, seconds

    friend bool operator==(const QueryMetrics&, const QueryMetrics&) = default;
};

struct RewardWeights {
    double lambda_perf = 0.9;
    double lambda_cost = 0.05;
    double lambda_time = 0.05;
    double alpha_cost = 5.0;         // per USD
    double alpha_time = 1.0 / 60.0;  // per second

    /// Throws std::invalid_argument unless all weights are strictly positive.
    void check() const;
};

/// (1 + alpha x)^-1. Throws std::invalid_argument for negative x or
/// non-positive alpha.
double utility(double x, double alpha);

/// lambda_perf S + lambda_cost U(C) + lambda_time U(T) for one query.
double composite_reward(const QueryMetrics& m, const RewardWeights& w);

/// Mean of per-query composites. Throws std::invalid_argument when empty.
double aggregate_reward(std::span<const QueryMetrics> metrics, const RewardWeights& w);

/// Answer normalization used by score_math: trims, drops surrounding answer
/// markup (\boxed{}, $..$, **..**, "Answer:" prefixes, a final period) and
/// collapses whitespace.
std::string normalize_answer(std::string_view text);

/// Exact rational string "p/q" (lowest terms, q > 0) for integers, decimals,
/// a/b fractions and \frac{a}{b}; nullopt when the text is not numeric.
std::optional<std::string> parse_rational(std::string_view text);

/// 1 iff the normalized answers agree: numerically when both parse as
/// rationals, else case-insensitively.
int score_math(std::string_view answer, std::string_view gold);

/// First fenced code block in `text`, or the whole text when unfenced.
std::string extract_program(std::string_view text);

/// pass@1: 1 iff the program passes every test (stdin -> stdout, compared
/// after trimming surrounding whitespace). Throws SandboxUnavailable without a sandbox and
/// std::invalid_argument for an empty suite.
int score_code(std::string_view program, std::span<const TestCase> tests, const Sandbox* sandbox,
               const SandboxLimits& limits);

}  // namespace hetflow
