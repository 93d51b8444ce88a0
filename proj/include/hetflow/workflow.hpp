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
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace hetflow {

using NodeId = std::string;

// Binding name that every node receives implicitly: the workflow's input query.
inline constexpr std::string_view kQueryBinding = "query";

inline constexpr int kWorkflowSchemaVersion = 1;

/// Probabilistic reasoning node: backbone model, prompt template, sampling temperature.
/// The template refers to its inputs as `{name}`; `{{` and `}}` are literal braces.
struct LlmNode {
    std::string model;
    std::string instruction;
    double temperature = 1.0;

    friend bool operator==(const LlmNode&, const LlmNode&) = default;
};

/// Deterministic script node. `inputs` maps each declared input to its semantic
/// type name; type names are compared by string equality only.
struct CodeNode {
    std::string source;
    std::map<std::string, std::string> inputs;
    std::string output_type = "str";

    friend bool operator==(const CodeNode&, const CodeNode&) = default;
};

using NodeSpec = std::variant<LlmNode, CodeNode>;

inline bool is_llm(const NodeSpec& spec) { return std::holds_alternative<LlmNode>(spec); }

struct GuardedEdge {
    NodeId from;
    NodeId to;
    std::string label;
    std::optional<std::string> guard;

    friend bool operator==(const GuardedEdge&, const GuardedEdge&) = default;
};

struct WorkflowGraph {
    std::map<NodeId, NodeSpec> nodes;
    std::vector<GuardedEdge> edges;
    NodeId terminal;

    friend bool operator==(const WorkflowGraph&, const WorkflowGraph&) = default;
};

struct BehaviorDescriptor {
    int node_count = 0;
    int llm_count = 0;

    double llm_proportion() const {
        return node_count == 0 ? 0.0 : static_cast<double>(llm_count) / node_count;
    }

    friend bool operator==(const BehaviorDescriptor&, const BehaviorDescriptor&) = default;
};

enum class ViolationKind {
    kEmptyGraph,
    kEmptyNodeId,
    kMissingTerminal,
    kMissingEndpoint,
    kSelfLoop,
    kDuplicateEdge,
    kCycle,
    kUnboundCodeInput,
    kUnknownPlaceholder,
    kUnusedBinding,
    kReservedLabel,
    kAmbiguousBinding,
    kInvalidGuard,
    kInvalidTemperature,
    kEmptyField,
    kDeadNode,
    kSyntaxError,  // reported by callers that run a syntax checker
};

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(ViolationKind kind) const;
    std::string summary() const;
};

ValidationReport validate_graph(const WorkflowGraph& graph);

/// Kahn's algorithm with lexicographic NodeId tie-breaking.
/// Throws std::invalid_argument when the graph has a cycle or dangling edge.
std::vector<NodeId> topological_order(const WorkflowGraph& graph);

BehaviorDescriptor behavior_descriptor(const WorkflowGraph& graph);

/// Placeholder names referenced by an instruction template, in first-use order.
/// A placeholder is `{identifier}`; any other brace is literal text.
std::vector<std::string> template_placeholders(std::string_view instruction);

/// Substitutes placeholders from `bindings`. Names with no binding are left
/// verbatim and reported through `unbound`.
std::string render_template(std::string_view instruction,
                            const std::map<std::string, std::string>& bindings,
                            std::vector<std::string>* unbound = nullptr);

/// Compact form with sorted keys and edges sorted by (from, to, label).
std::string canonical_form(const WorkflowGraph& graph);

/// SHA-256 hex digest of canonical_form.
std::string fingerprint(const WorkflowGraph& graph);

/// Human-readable document (two-space indentation, sorted keys, edges in graph order).
std::string serialize(const WorkflowGraph& graph);

class DocumentError : public std::runtime_error {
public:
    enum class Kind { kMalformed, kSchema };

    DocumentError(Kind kind, std::string location, const std::string& message);

    Kind kind() const { return kind_; }
    const std::string& location() const { return location_; }

private:
    Kind kind_;
    std::string location_;
};

/// Parses a workflow document. Schema checks cover field presence and types,
/// the version number, and temperature range; structural checks are left to
/// validate_graph.
WorkflowGraph deserialize(std::string_view document);

}  // namespace hetflow
