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

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hetflow/backend.hpp"
#include "hetflow/guard.hpp"
#include "hetflow/sandbox.hpp"
#include "hetflow/workflow.hpp"

namespace hetflow {

// kWallClock measures real elapsed time. kVirtual charges each LLM node the
// wall_time its backend reports and each code node a fixed amount, so scripted
// runs produce identical latencies on every machine.
enum class Timing { kWallClock, kVirtual };

struct ExecutorConfig {
    SandboxLimits limits;
    Timing timing = Timing::kWallClock;
    double virtual_code_seconds = 0.0;
};

struct NodeOutput {
    NodeId node;
    Value value;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double wall_time = 0.0;
    double cost = 0.0;
    bool skipped = false;
    std::string error;  // empty on success

    bool failed() const { return !error.empty(); }
};

struct TraceEvent {
    NodeId node;
    std::string kind;  // node-start, node-end, guard, skip, error
    std::string detail;

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct ExecutionTrace {
    std::vector<NodeOutput> outputs;  // execution order
    Value answer;
    double total_cost = 0.0;     // USD
    double total_latency = 0.0;  // seconds
    std::vector<TraceEvent> log;

    bool failed() const { return !answer.has_value(); }
};

using Bindings = std::map<std::string, Value>;

/// Runs validated workflows by topological message passing. Node failures are
/// recorded in the trace and turn that node's output ABSENT; they never throw.
/// Stateless apart from the shared backend, so one Executor may serve many
/// threads.
class Executor {
public:
    Executor(Backend& backend, const CostTable& costs, const Sandbox* sandbox, ExecutorConfig config = {});

    /// Throws std::invalid_argument for cyclic or dangling graphs.
    ExecutionTrace execute(const WorkflowGraph& graph, std::string_view query) const;

    /// Bindings go to the script's stdin as one JSON object (ABSENT -> null);
    /// the output is stdout minus one trailing newline.
    NodeOutput run_code_node(const NodeId& id, const CodeNode& spec, const Bindings& bindings) const;

    NodeOutput run_llm_node(const NodeId& id, const LlmNode& spec, const Bindings& bindings) const;

    const ExecutorConfig& config() const { return config_; }
    const Sandbox* sandbox() const { return sandbox_; }

private:
    Backend& backend_;
    const CostTable& costs_;
    const Sandbox* sandbox_;
    ExecutorConfig config_;
};

/// Serialized stdin document for a code node.
std::string encode_bindings(const Bindings& bindings);

bool is_valid_utf8(std::string_view s);

}  // namespace hetflow
