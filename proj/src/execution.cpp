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

#include "hetflow/execution.hpp"

#include <algorithm>
#include <chrono>

#include <json.hpp>

namespace hetflow {

using json = nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string excerpt(std::string_view s, std::size_t n = 300) {
    std::string out(s.substr(0, n));
    if (s.size() > n) out += "...";
    return out;
}

}  // namespace

std::string encode_bindings(const Bindings& bindings) {
    json j = json::object();
    for (const auto& [label, value] : bindings) j[label] = value ? json(*value) : json(nullptr);
    return j.dump();
}

bool is_valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c >> 5) == 0x6) {
            len = 2;
            cp = c & 0x1f;
        } else if ((c >> 4) == 0xe) {
            len = 3;
            cp = c & 0x0f;
        } else if ((c >> 3) == 0x1e) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc >> 6) != 0x2) return false;
            cp = (cp << 6) | (cc & 0x3f);
        }
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))
            return false;
        i += len;
    }
    return true;
}

Executor::Executor(Backend& backend, const CostTable& costs, const Sandbox* sandbox, ExecutorConfig config)
    : backend_(backend), costs_(costs), sandbox_(sandbox), config_(config) {
    config_.limits.check();
}

NodeOutput Executor::run_code_node(const NodeId& id, const CodeNode& spec, const Bindings& bindings) const {
    NodeOutput out;
    out.node = id;
    for (const auto& [name, type] : spec.inputs) {
        if (!bindings.count(name)) {
            out.error = "unbound input '" + name + "'";
            return out;
        }
    }
    if (!sandbox_) throw SandboxUnavailable("no sandbox configured for code node " + id);

    ProcessResult r = sandbox_->run(spec.source, encode_bindings(bindings), config_.limits);
    out.wall_time = config_.timing == Timing::kVirtual ? config_.virtual_code_seconds : r.wall_time;
    if (r.status != RunStatus::kOk) {
        out.error = std::string(to_string(r.status));
        if (r.status == RunStatus::kNonzeroExit) out.error += " (exit " + std::to_string(r.exit_code) + ")";
        if (!r.err.empty()) out.error += ": " + excerpt(r.err);
        return out;
    }
    std::string text = std::move(r.out);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    if (!is_valid_utf8(text)) {
        out.error = "malformed-output: stdout is not valid UTF-8";
        return out;
    }
    out.value = std::move(text);
    return out;
}

NodeOutput Executor::run_llm_node(const NodeId& id, const LlmNode& spec, const Bindings& bindings) const {
    NodeOutput out;
    out.node = id;
    std::map<std::string, std::string> present;
    for (const auto& [label, value] : bindings)
        if (value) present[label] = *value;
    std::vector<std::string> unbound;
    const std::string prompt = render_template(spec.instruction, present, &unbound);
    if (!unbound.empty()) {
        out.error = "unbound-placeholder {" + unbound.front() + "}";
        return out;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        LlmResponse resp = backend_.complete({spec.model, prompt, spec.temperature, Purpose::kTaskNode});
        out.prompt_tokens = resp.prompt_tokens;
        out.completion_tokens = resp.completion_tokens;
        out.wall_time = config_.timing == Timing::kVirtual ? resp.wall_time : seconds_since(t0);
        out.cost = cost_of(resp, spec.model, costs_);
        out.value = std::move(resp.text);
    } catch (const BackendError& e) {
        out.error = std::string("backend-failure: ") + e.what();
        out.value.reset();
    } catch (const std::invalid_argument& e) {
        out.error = std::string("bad-request: ") + e.what();
    }
    return out;
}

ExecutionTrace Executor::execute(const WorkflowGraph& graph, std::string_view query) const {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<NodeId> order = topological_order(graph);

    // destination -> label -> edges ordered by source id
    std::map<NodeId, std::map<std::string, std::vector<const GuardedEdge*>>> incoming;
    for (const auto& e : graph.edges) incoming[e.to][e.label].push_back(&e);
    for (auto& [to, groups] : incoming)
        for (auto& [label, edges] : groups)
            std::sort(edges.begin(), edges.end(), [](const auto* a, const auto* b) { return a->from < b->from; });

    ExecutionTrace trace;
    std::map<NodeId, Value> values;
    const std::string query_text(query);

    for (const NodeId& id : order) {
        const NodeSpec& spec = graph.nodes.at(id);
        Bindings bindings;
        bool skip = false;
        for (const auto& [label, edges] : incoming[id]) {
            std::vector<Value> delivered;
            for (const auto* e : edges) {
                const Value& src = values.at(e->from);
                bool pass = true;
                if (e->guard) {
                    try {
                        pass = Guard::parse(*e->guard).evaluate(src);
                        trace.log.push_back({id, "guard", e->from + " [" + label + "] " + *e->guard + " -> " +
                                                              (pass ? "true" : "false")});
                    } catch (const GuardError& err) {
                        pass = false;
                        trace.log.push_back({id, "error", std::string("guard-error: ") + err.what()});
                    }
                }
                if (pass) delivered.push_back(src);
            }
            if (delivered.empty()) {
                skip = true;
                trace.log.push_back({id, "skip", "no alternative delivered binding '" + label + "'"});
                break;
            }
            auto present = std::find_if(delivered.begin(), delivered.end(), [](const Value& v) { return v.has_value(); });
            bindings[label] = present != delivered.end() ? *present : Value{};
        }
        bindings[std::string(kQueryBinding)] = query_text;

        NodeOutput out;
        out.node = id;
        if (!skip && is_llm(spec)) {
            // An LLM prompt cannot render an ABSENT input.
            for (const auto& [label, value] : bindings) {
                if (!value) {
                    skip = true;
                    trace.log.push_back({id, "skip", "input '" + label + "' is ABSENT"});
                    break;
                }
            }
        }
        if (skip) {
            out.skipped = true;
        } else {
            trace.log.push_back({id, "node-start", is_llm(spec) ? "llm" : "code"});
            if (const auto* llm = std::get_if<LlmNode>(&spec)) {
                out = run_llm_node(id, *llm, bindings);
            } else {
                const auto& code = std::get<CodeNode>(spec);
                Bindings declared;
                for (const auto& [name, type] : code.inputs) {
                    auto it = bindings.find(name);
                    if (it != bindings.end()) declared[name] = it->second;
                }
                declared[std::string(kQueryBinding)] = query_text;
                out = run_code_node(id, code, declared);
            }
            if (out.failed())
                trace.log.push_back({id, "error", out.error});
            else
                trace.log.push_back({id, "node-end", excerpt(*out.value, 120)});
        }
        values[id] = out.value;
        trace.total_cost += out.cost;
        if (config_.timing == Timing::kVirtual) trace.total_latency += out.wall_time;
        trace.outputs.push_back(std::move(out));
    }

    trace.answer = values.at(graph.terminal);
    if (config_.timing == Timing::kWallClock) trace.total_latency = seconds_since(t0);
    if (!trace.answer) trace.log.push_back({graph.terminal, "error", "terminal output is ABSENT"});
    return trace;
}

}  // namespace hetflow
