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

#include "hetflow/workflow.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "hetflow/digest.hpp"
#include "hetflow/guard.hpp"

namespace hetflow {

using json = nlohmann::json;

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::kEmptyGraph: return "empty-graph";
        case ViolationKind::kEmptyNodeId: return "empty-node-id";
        case ViolationKind::kMissingTerminal: return "missing-terminal";
        case ViolationKind::kMissingEndpoint: return "missing-endpoint";
        case ViolationKind::kSelfLoop: return "self-loop";
        case ViolationKind::kDuplicateEdge: return "duplicate-edge";
        case ViolationKind::kCycle: return "cycle";
        case ViolationKind::kUnboundCodeInput: return "unbound-code-input";
        case ViolationKind::kUnknownPlaceholder: return "unknown-placeholder";
        case ViolationKind::kUnusedBinding: return "unused-binding";
        case ViolationKind::kReservedLabel: return "reserved-label";
        case ViolationKind::kAmbiguousBinding: return "ambiguous-binding";
        case ViolationKind::kInvalidGuard: return "invalid-guard";
        case ViolationKind::kInvalidTemperature: return "invalid-temperature";
        case ViolationKind::kEmptyField: return "empty-field";
        case ViolationKind::kDeadNode: return "dead-node";
        case ViolationKind::kSyntaxError: return "syntax-error";
    }
    return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += to_string(v.kind);
        if (!v.detail.empty()) {
            out += ": ";
            out += v.detail;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_text for literal runs and on_placeholder for each {name}.
void scan_template(std::string_view s, const std::function<void(std::string_view)>& on_text,
                   const std::function<void(const std::string&)>& on_placeholder) {
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '{' && i + 1 < s.size() && s[i + 1] == '{') {
            on_text("{");
            i += 2;
            continue;
        }
        if (s[i] == '}' && i + 1 < s.size() && s[i + 1] == '}') {
            on_text("}");
            i += 2;
            continue;
        }
        if (s[i] == '{' && i + 1 < s.size() && is_ident_start(s[i + 1])) {
            std::size_t j = i + 1;
            while (j < s.size() && is_ident_char(s[j])) ++j;
            if (j < s.size() && s[j] == '}') {
                on_placeholder(std::string(s.substr(i + 1, j - i - 1)));
                i = j + 1;
                continue;
            }
        }
        on_text(s.substr(i, 1));
        ++i;
    }
}

}  // namespace

std::vector<std::string> template_placeholders(std::string_view instruction) {
    std::vector<std::string> names;
    scan_template(
        instruction, [](std::string_view) {},
        [&](const std::string& name) {
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
        });
    return names;
}

std::string render_template(std::string_view instruction,
                            const std::map<std::string, std::string>& bindings,
                            std::vector<std::string>* unbound) {
    std::string out;
    scan_template(
        instruction, [&](std::string_view text) { out += text; },
        [&](const std::string& name) {
            auto it = bindings.find(name);
            if (it != bindings.end()) {
                out += it->second;
            } else {
                out += '{' + name + '}';
                if (unbound) unbound->push_back(name);
            }
        });
    return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

struct Validator {
    const WorkflowGraph& g;
    ValidationReport report;

    void add(ViolationKind kind, std::string detail) {
        report.violations.push_back({kind, std::move(detail)});
    }

    bool endpoints_ok(const GuardedEdge& e) const {
        return g.nodes.count(e.from) && g.nodes.count(e.to);
    }

    static std::string edge_name(const GuardedEdge& e) {
        return e.from + "->" + e.to + " [" + e.label + "]";
    }

    void check_nodes() {
        for (const auto& [id, spec] : g.nodes) {
            if (id.empty()) add(ViolationKind::kEmptyNodeId, "node with empty id");
            if (const auto* llm = std::get_if<LlmNode>(&spec)) {
                if (llm->model.empty()) add(ViolationKind::kEmptyField, id + ": model");
                if (llm->instruction.empty()) add(ViolationKind::kEmptyField, id + ": instruction");
                if (!(llm->temperature >= 0.0 && llm->temperature <= 1.0))
                    add(ViolationKind::kInvalidTemperature,
                        id + ": temperature " + std::to_string(llm->temperature));
            } else {
                const auto& code = std::get<CodeNode>(spec);
                if (code.source.empty()) add(ViolationKind::kEmptyField, id + ": source");
                if (code.output_type.empty()) add(ViolationKind::kEmptyField, id + ": output_type");
                for (const auto& [name, type] : code.inputs) {
                    if (name.empty()) add(ViolationKind::kEmptyField, id + ": input name");
                    if (type.empty()) add(ViolationKind::kEmptyField, id + ": type of input " + name);
                }
            }
        }
    }

    void check_edges() {
        std::set<std::tuple<std::string, std::string, std::string>> seen;
        for (const auto& e : g.edges) {
            if (!g.nodes.count(e.from))
                add(ViolationKind::kMissingEndpoint, edge_name(e) + ": unknown source " + e.from);
            if (!g.nodes.count(e.to))
                add(ViolationKind::kMissingEndpoint, edge_name(e) + ": unknown destination " + e.to);
            if (e.from == e.to) add(ViolationKind::kSelfLoop, edge_name(e));
            if (e.label.empty()) add(ViolationKind::kEmptyField, edge_name(e) + ": label");
            if (e.label == kQueryBinding) add(ViolationKind::kReservedLabel, edge_name(e));
            if (!seen.insert({e.from, e.to, e.label}).second)
                add(ViolationKind::kDuplicateEdge, edge_name(e));
            if (e.guard) {
                try {
                    (void)Guard::parse(*e.guard);
                } catch (const GuardError& err) {
                    add(ViolationKind::kInvalidGuard, edge_name(e) + ": " + err.what());
                }
            }
        }
    }

    void check_bindings() {
        // label -> incoming edges, per destination
        std::map<NodeId, std::map<std::string, std::vector<const GuardedEdge*>>> incoming;
        for (const auto& e : g.edges) incoming[e.to][e.label].push_back(&e);

        for (const auto& [id, spec] : g.nodes) {
            const auto& groups = incoming[id];
            std::set<std::string> consumed;
            if (const auto* llm = std::get_if<LlmNode>(&spec)) {
                for (const auto& name : template_placeholders(llm->instruction)) {
                    consumed.insert(name);
                    if (name != kQueryBinding && !groups.count(name))
                        add(ViolationKind::kUnknownPlaceholder, id + ": {" + name + "}");
                }
            } else {
                for (const auto& [name, type] : std::get<CodeNode>(spec).inputs) {
                    consumed.insert(name);
                    if (name != kQueryBinding && !groups.count(name))
                        add(ViolationKind::kUnboundCodeInput, id + ": " + name);
                }
            }
            for (const auto& [label, edges] : groups) {
                if (label != kQueryBinding && !consumed.count(label))
                    add(ViolationKind::kUnusedBinding, id + ": " + label);
                if (edges.size() > 1) {
                    for (const auto* e : edges)
                        if (!e->guard)
                            add(ViolationKind::kAmbiguousBinding,
                                id + ": unguarded edge among alternatives for " + label);
                }
            }
        }
    }

    void check_cycles() {
        std::map<NodeId, std::vector<NodeId>> adj;
        for (const auto& e : g.edges)
            if (endpoints_ok(e) && e.from != e.to) adj[e.from].push_back(e.to);
        for (auto& [k, v] : adj) std::sort(v.begin(), v.end());

        enum Color { kWhite, kGray, kBlack };
        std::map<NodeId, Color> color;
        std::vector<NodeId> stack;
        bool found = false;
        std::function<void(const NodeId&)> dfs = [&](const NodeId& u) {
            color[u] = kGray;
            stack.push_back(u);
            for (const auto& v : adj[u]) {
                if (found) break;
                if (color[v] == kGray) {
                    auto it = std::find(stack.begin(), stack.end(), v);
                    std::string path;
                    for (; it != stack.end(); ++it) path += *it + " -> ";
                    add(ViolationKind::kCycle, path + v);
                    found = true;
                } else if (color[v] == kWhite) {
                    dfs(v);
                }
            }
            stack.pop_back();
            color[u] = kBlack;
        };
        for (const auto& [id, spec] : g.nodes)
            if (!found && color[id] == kWhite) dfs(id);
    }

    void check_liveness() {
        if (!g.nodes.count(g.terminal)) return;
        std::map<NodeId, std::vector<NodeId>> radj;
        for (const auto& e : g.edges)
            if (endpoints_ok(e)) radj[e.to].push_back(e.from);
        std::set<NodeId> live{g.terminal};
        std::vector<NodeId> frontier{g.terminal};
        while (!frontier.empty()) {
            NodeId u = frontier.back();
            frontier.pop_back();
            for (const auto& v : radj[u])
                if (live.insert(v).second) frontier.push_back(v);
        }
        for (const auto& [id, spec] : g.nodes)
            if (!live.count(id)) add(ViolationKind::kDeadNode, id + " has no path to " + g.terminal);
    }

    ValidationReport run() {
        if (g.nodes.empty()) {
            add(ViolationKind::kEmptyGraph, "");
            return std::move(report);
        }
        check_nodes();
        if (!g.nodes.count(g.terminal))
            add(ViolationKind::kMissingTerminal, "terminal '" + g.terminal + "' is not a node");
        check_edges();
        check_bindings();
        check_cycles();
        check_liveness();
        return std::move(report);
    }
};

}  // namespace

ValidationReport validate_graph(const WorkflowGraph& graph) { return Validator{graph, {}}.run(); }

std::vector<NodeId> topological_order(const WorkflowGraph& graph) {
    std::map<NodeId, int> indegree;
    std::map<NodeId, std::vector<NodeId>> adj;
    for (const auto& [id, spec] : graph.nodes) indegree[id] = 0;
    for (const auto& e : graph.edges) {
        if (!indegree.count(e.from) || !indegree.count(e.to))
            throw std::invalid_argument("topological_order: dangling edge " + e.from + "->" + e.to);
        adj[e.from].push_back(e.to);
        ++indegree[e.to];
    }
    std::set<NodeId> ready;
    for (const auto& [id, d] : indegree)
        if (d == 0) ready.insert(id);
    std::vector<NodeId> order;
    order.reserve(graph.nodes.size());
    while (!ready.empty()) {
        NodeId u = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(u);
        for (const auto& v : adj[u])
            if (--indegree[v] == 0) ready.insert(v);
    }
    if (order.size() != graph.nodes.size())
        throw std::invalid_argument("topological_order: graph has a cycle");
    return order;
}

BehaviorDescriptor behavior_descriptor(const WorkflowGraph& graph) {
    BehaviorDescriptor d;
    d.node_count = static_cast<int>(graph.nodes.size());
    for (const auto& [id, spec] : graph.nodes)
        if (is_llm(spec)) ++d.llm_count;
    return d;
}

// ---------------------------------------------------------------------------
// Documents

namespace {

json node_to_json(const NodeSpec& spec) {
    if (const auto* llm = std::get_if<LlmNode>(&spec)) {
        return json{{"kind", "llm"},
                    {"model", llm->model},
                    {"instruction", llm->instruction},
                    {"temperature", llm->temperature}};
    }
    const auto& code = std::get<CodeNode>(spec);
    json inputs = json::object();
    for (const auto& [name, type] : code.inputs) inputs[name] = type;
    return json{{"kind", "code"},
                {"source", code.source},
                {"inputs", inputs},
                {"output_type", code.output_type}};
}

json edge_to_json(const GuardedEdge& e) {
    json j{{"from", e.from}, {"to", e.to}, {"label", e.label}};
    if (e.guard) j["guard"] = *e.guard;
    return j;
}

json graph_to_json(const WorkflowGraph& g, bool sort_edges) {
    json nodes = json::object();
    for (const auto& [id, spec] : g.nodes) nodes[id] = node_to_json(spec);
    std::vector<const GuardedEdge*> edges;
    for (const auto& e : g.edges) edges.push_back(&e);
    if (sort_edges) {
        std::stable_sort(edges.begin(), edges.end(), [](const auto* a, const auto* b) {
            return std::tie(a->from, a->to, a->label) < std::tie(b->from, b->to, b->label);
        });
    }
    json jedges = json::array();
    for (const auto* e : edges) jedges.push_back(edge_to_json(*e));
    return json{{"version", kWorkflowSchemaVersion},
                {"nodes", nodes},
                {"edges", jedges},
                {"terminal", g.terminal}};
}

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    throw DocumentError(DocumentError::Kind::kSchema, where, what);
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(where + "/" + key, "missing required field '" + key + "'");
    return *it;
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) schema_error(where + "/" + key, "expected string");
    return v.get<std::string>();
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = std::any_of(allowed.begin(), allowed.end(),
                              [&](const char* a) { return key == a; });
        if (!ok) schema_error(where + "/" + key, "unknown field '" + key + "'");
    }
}

NodeSpec node_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) schema_error(where, "expected object");
    const std::string kind = require_string(j, "kind", where);
    if (kind == "llm") {
        reject_unknown_keys(j, {"kind", "model", "instruction", "temperature"}, where);
        LlmNode n;
        n.model = require_string(j, "model", where);
        n.instruction = require_string(j, "instruction", where);
        const json& t = require(j, "temperature", where);
        if (!t.is_number()) schema_error(where + "/temperature", "expected number");
        n.temperature = t.get<double>();
        if (!(n.temperature >= 0.0 && n.temperature <= 1.0))
            schema_error(where + "/temperature", "temperature must lie in [0, 1]");
        return n;
    }
    if (kind == "code") {
        reject_unknown_keys(j, {"kind", "source", "inputs", "output_type"}, where);
        CodeNode n;
        n.source = require_string(j, "source", where);
        const json& inputs = require(j, "inputs", where);
        if (!inputs.is_object()) schema_error(where + "/inputs", "expected object of name -> type");
        for (const auto& [name, type] : inputs.items()) {
            if (!type.is_string()) schema_error(where + "/inputs/" + name, "expected type name string");
            n.inputs[name] = type.get<std::string>();
        }
        n.output_type = require_string(j, "output_type", where);
        return n;
    }
    schema_error(where + "/kind", "kind must be \"llm\" or \"code\", got \"" + kind + "\"");
}

}  // namespace

std::string canonical_form(const WorkflowGraph& graph) { return graph_to_json(graph, true).dump(); }

std::string fingerprint(const WorkflowGraph& graph) { return sha256_hex(canonical_form(graph)); }

std::string serialize(const WorkflowGraph& graph) { return graph_to_json(graph, false).dump(2); }

DocumentError::DocumentError(Kind kind, std::string location, const std::string& message)
    : std::runtime_error((kind == Kind::kMalformed ? "malformed document at " : "schema violation at ") +
                         location + ": " + message),
      kind_(kind),
      location_(std::move(location)) {}

WorkflowGraph deserialize(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw DocumentError(DocumentError::Kind::kMalformed, "byte " + std::to_string(e.byte), e.what());
    }
    if (!doc.is_object()) schema_error("", "document must be an object");
    reject_unknown_keys(doc, {"version", "nodes", "edges", "terminal"}, "");

    const json& version = require(doc, "version", "");
    if (!version.is_number_integer() || version.get<int>() != kWorkflowSchemaVersion)
        schema_error("/version", "unsupported version (expected " +
                                     std::to_string(kWorkflowSchemaVersion) + ")");

    WorkflowGraph g;
    const json& nodes = require(doc, "nodes", "");
    if (!nodes.is_object()) schema_error("/nodes", "expected object of id -> node");
    for (const auto& [id, node] : nodes.items()) g.nodes.emplace(id, node_from_json(node, "/nodes/" + id));

    const json& edges = require(doc, "edges", "");
    if (!edges.is_array()) schema_error("/edges", "expected array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string where = "/edges/" + std::to_string(i);
        const json& e = edges[i];
        if (!e.is_object()) schema_error(where, "expected object");
        reject_unknown_keys(e, {"from", "to", "label", "guard"}, where);
        GuardedEdge edge;
        edge.from = require_string(e, "from", where);
        edge.to = require_string(e, "to", where);
        edge.label = require_string(e, "label", where);
        if (auto it = e.find("guard"); it != e.end() && !it->is_null()) {
            if (!it->is_string()) schema_error(where + "/guard", "expected string");
            edge.guard = it->get<std::string>();
        }
        g.edges.push_back(std::move(edge));
    }
    g.terminal = require_string(doc, "terminal", "");
    return g;
}

}  // namespace hetflow
