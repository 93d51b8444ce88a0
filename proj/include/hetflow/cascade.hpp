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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetflow/execution.hpp"
#include "hetflow/population.hpp"
#include "hetflow/scoring.hpp"

namespace hetflow {

enum class GammaMode { kAbsolute, kFractionOfBest };

struct SplitConfig {
    double gamma = 0.9;  // absolute threshold, or factor applied to the best reward so far
    GammaMode mode = GammaMode::kFractionOfBest;
};

double effective_gamma(const SplitConfig& split, double current_best_reward);

/// Stage one covers the first ceil(n/2) items of the dataset order.
inline std::size_t stage1_size(std::size_t n) { return (n + 1) / 2; }

enum class EvalStatus { kScreenedOut, kCompleted, kInvalid };

std::string_view to_string(EvalStatus status);

struct QueryResult {
    QueryMetrics metrics;
    bool passed = false;
    std::vector<std::string> log;  // first line is the verdict
};

struct EvalOutcome {
    EvalStatus status = EvalStatus::kInvalid;
    double stage1_reward = 0.0;
    std::optional<double> reward;       // set only when completed
    std::vector<QueryMetrics> metrics;  // dataset order, executed queries only
    std::vector<std::string> logs;      // failing queries first, then passing ones
    std::vector<std::string> failure_logs;
    std::size_t queries_executed = 0;

    MetricsSummary mean_metrics() const;
};

struct EvalEnvironment {
    const Executor* executor = nullptr;
    RewardWeights weights;
    int width = 1;  // concurrent queries per stage
};

/// Runs and scores one query. Engine faults (sandbox unavailable) propagate.
QueryResult evaluate_query(const WorkflowGraph& graph, const Task& task, std::size_t index, const Executor& executor);

/// Two-stage evaluation. With `gamma` unset the gate is disabled and the full
/// dataset is always evaluated.
EvalOutcome cascaded_eval(const WorkflowGraph& graph, std::span<const Task> dataset, std::optional<double> gamma,
                          const EvalEnvironment& env);

}  // namespace hetflow
