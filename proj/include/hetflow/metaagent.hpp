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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetflow/backend.hpp"
#include "hetflow/population.hpp"
#include "hetflow/sandbox.hpp"
#include "hetflow/scoring.hpp"

namespace hetflow {

inline constexpr int kPromptContractVersion = 1;

/// Standing instruction for the meta-agent: node kinds, guard language, the
/// code-node stdin/stdout protocol, the document schema and the objective.
std::string system_instruction(const RewardWeights& weights);

struct EvolutionContext {
    RecordPtr parent;
    RecordPtr top;
    RecordPtr diverse;
    int step = 0;
    int total_steps = 0;
};

struct PromptPair {
    std::string reflect;
    std::string context;  // shared by reflect and generate

    /// Generate prompt; without a reflection the diagnosis section says so.
    std::string generate(const std::optional<std::string>& reflection) const;
};

/// Newest entries first in budget priority, printed oldest to newest, with a
/// marker for dropped entries. Empty logs render an explicit marker.
std::string render_logs(std::span<const std::string> logs, std::size_t budget_bytes);

PromptPair build_prompt(const EvolutionContext& ctx, std::string_view system, std::size_t log_budget_bytes);

std::string render_repair(std::string_view generate_prompt, std::string_view error);

/// Contents of the first ``` fenced block, or nullopt.
std::optional<std::string> extract_fenced_document(std::string_view completion);

enum class RejectReason { kNone, kBackendFailure, kParseFailure, kSchemaViolation, kValidationFailure };

std::string_view to_string(RejectReason reason);

struct Exchange {
    Purpose purpose;
    std::string prompt;
    std::string completion;
};

struct SynthesisResult {
    std::string reflection;
    std::optional<WorkflowGraph> candidate;
    RejectReason reason = RejectReason::kNone;
    std::string detail;
    std::vector<Exchange> transcript;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    bool ok() const { return candidate.has_value(); }
};

struct MetaAgentConfig {
    std::string model = "gpt-4o-mini";
    double temperature = 1.0;
    std::size_t log_budget_bytes = 4000;
    int repair_retries = 1;
};

/// Reflect-then-generate synthesis. Stateless; holds references only, so it
/// never touches population state.
class MetaAgent {
public:
    MetaAgent(Backend& backend, MetaAgentConfig config, RewardWeights weights,
              const Sandbox* syntax_checker = nullptr);

    /// Returns the diagnosis verbatim. Throws BackendError.
    std::string reflect(const std::string& prompt, SynthesisResult& acc) const;

    /// Extracts, parses and validates the candidate, with bounded repair
    /// retries on unparseable replies.
    SynthesisResult generate(const std::string& prompt, SynthesisResult acc = {}) const;

    SynthesisResult synthesize(const EvolutionContext& ctx, bool use_reflection) const;

    const std::string& system() const { return system_; }

private:
    LlmResponse call(const std::string& prompt, Purpose purpose, SynthesisResult& acc) const;

    Backend& backend_;
    MetaAgentConfig config_;
    std::string system_;
    const Sandbox* syntax_checker_;
};

}  // namespace hetflow
