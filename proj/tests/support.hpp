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

// Shared helpers for the test binaries: fixture paths, graph generators and
// brute-force oracles written independently of the library code they check.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "hetflow/workflow.hpp"

namespace hetflow::testing {

inline std::filesystem::path fixture_dir() { return HETFLOW_FIXTURE_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hetflow-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// Oracles

/// Boolean reachability by repeated squaring of the adjacency relation.
/// reach[i][j] is true when a non-empty path i -> ... -> j exists.
inline std::vector<std::vector<bool>> transitive_closure(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
    for (auto [a, b] : edges) r[a][b] = true;
    for (int round = 0; round < n; ++round)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (r[i][j])
                    for (int k = 0; k < n; ++k)
                        if (r[j][k]) r[i][k] = true;
    return r;
}

/// Lexicographically smallest topological order found by scanning every
/// permutation in lexicographic order; empty when none exists.
inline std::vector<std::string> brute_force_topo(std::vector<std::string> ids,
                                                 const std::vector<std::pair<std::string, std::string>>& edges) {
    std::sort(ids.begin(), ids.end());
    do {
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
        bool ok = true;
        for (const auto& [a, b] : edges)
            if (pos[a] >= pos[b]) ok = false;
        if (ok) return ids;
    } while (std::next_permutation(ids.begin(), ids.end()));
    return {};
}

// ---------------------------------------------------------------------------
// Generators

/// Structural fuzz case: n LLM nodes n0..n{n-1}, arbitrary directed edges
/// (self-loops and cycles allowed), each node's template consuming exactly its
/// incoming labels so that only structure can make it invalid.
struct FuzzCase {
    WorkflowGraph graph;
    int n = 0;
    int terminal = 0;
    std::vector<std::pair<int, int>> edges;
};

inline FuzzCase random_structure(std::mt19937_64& gen, int max_nodes = 6) {
    FuzzCase fc;
    fc.n = 1 + static_cast<int>(gen() % static_cast<unsigned>(max_nodes));
    std::set<std::pair<int, int>> pairs;
    const double density = 0.1 + 0.5 * static_cast<double>(gen() % 1000) / 1000.0;
    for (int a = 0; a < fc.n; ++a)
        for (int b = 0; b < fc.n; ++b) {
            const bool self = a == b;
            const double p = self ? 0.03 : (a < b ? density : density * 0.15);
            if (static_cast<double>(gen() % 10000) / 10000.0 < p) pairs.insert({a, b});
        }
    fc.edges.assign(pairs.begin(), pairs.end());
    fc.terminal = static_cast<int>(gen() % static_cast<unsigned>(fc.n));
    auto id = [](int i) { return "n" + std::to_string(i); };
    for (int i = 0; i < fc.n; ++i) {
        std::string instr = "step " + std::to_string(i) + " {query}";
        for (auto [a, b] : fc.edges)
            if (b == i) instr += " {from_" + std::to_string(a) + "}";
        fc.graph.nodes.emplace(id(i), LlmNode{"m", instr, 0.5});
    }
    for (auto [a, b] : fc.edges) fc.graph.edges.push_back({id(a), id(b), "from_" + std::to_string(a), std::nullopt});
    fc.graph.terminal = id(fc.terminal);
    return fc;
}

/// Oracle decision for a FuzzCase: no self-loop, acyclic, every node reaches
/// the terminal (or is the terminal).
inline bool oracle_accepts(const FuzzCase& fc) {
    auto reach = transitive_closure(fc.n, fc.edges);
    for (int i = 0; i < fc.n; ++i)
        if (reach[i][i]) return false;
    for (int i = 0; i < fc.n; ++i)
        if (i != fc.terminal && !reach[i][fc.terminal]) return false;
    return true;
}

inline std::string random_text(std::mt19937_64& gen, std::size_t max_len) {
    static const std::vector<std::string> pieces{
        "a", "Z", " ", "\n", "\t", "\"", "\\", "/", "{{", "}}", "é", "日本", "🙂", "$1", "%", "0.5", "<>", "'", "`"};
    std::string s;
    const std::size_t len = gen() % (max_len + 1);
    for (std::size_t i = 0; i < len; ++i) s += pieces[gen() % pieces.size()];
    return s;
}

/// Random valid workflow: a DAG over 1..max_nodes nodes mixing LLM and code
/// nodes, guarded alternatives, and awkward text in every string field.
inline WorkflowGraph random_valid_graph(std::mt19937_64& gen, int max_nodes = 9) {
    const int n = 1 + static_cast<int>(gen() % static_cast<unsigned>(max_nodes));
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("node_" + std::to_string(i) + (gen() % 3 == 0 ? "-é" : ""));
    // Edges only go from lower to higher index; the last node is the terminal
    // and every other node gets at least one forward edge, so all reach it.
    struct In {
        int from;
        std::string label;
        std::optional<std::string> guard;
    };
    std::vector<std::vector<In>> incoming(n);
    static const std::vector<std::string> guards{"contains(\"ok\")", "!is_absent()", "matches('^[0-9]+$')",
                                                 "not equals(\"x\")", "is_absent()"};
    for (int a = 0; a + 1 < n; ++a) {
        std::set<int> targets{a + 1 + static_cast<int>(gen() % static_cast<unsigned>(n - a - 1))};
        for (int b = a + 1; b < n; ++b)
            if (gen() % 4 == 0) targets.insert(b);
        for (int b : targets) {
            In in{a, "in" + std::to_string(a), std::nullopt};
            if (gen() % 3 == 0) in.guard = guards[gen() % guards.size()];
            incoming[b].push_back(in);
            // Occasionally add a guarded alternative sharing the label.
            if (in.guard && a + 1 < b && gen() % 2 == 0) {
                const int alt = a + 1 + static_cast<int>(gen() % static_cast<unsigned>(b - a - 1));
                incoming[b].push_back(In{alt, in.label, guards[gen() % guards.size()]});
            }
        }
    }
    WorkflowGraph g;
    for (int i = 0; i < n; ++i) {
        std::set<std::string> labels;
        for (const auto& in : incoming[i]) labels.insert(in.label);
        if (gen() % 2 == 0) {
            std::string instr = random_text(gen, 6) + "{query}";
            for (const auto& l : labels) instr += " {" + l + "}" + random_text(gen, 3);
            const double temp = static_cast<double>(gen() % 1000001) / 1000000.0;
            g.nodes.emplace(ids[i], LlmNode{"model-" + std::to_string(gen() % 3), instr, temp});
        } else {
            CodeNode c;
            c.source = "import sys\n# " + random_text(gen, 8) + "\nprint(sys.stdin.read())";
            for (const auto& l : labels) c.inputs[l] = gen() % 2 ? "str" : "json:" + random_text(gen, 2) + "x";
            if (gen() % 4 == 0) c.inputs["query"] = "str";
            c.output_type = gen() % 2 ? "str" : "int";
            g.nodes.emplace(ids[i], c);
        }
        for (const auto& in : incoming[i]) g.edges.push_back({ids[in.from], ids[i], in.label, in.guard});
    }
    std::shuffle(g.edges.begin(), g.edges.end(), gen);
    g.terminal = ids[n - 1];
    return g;
}

}  // namespace hetflow::testing
