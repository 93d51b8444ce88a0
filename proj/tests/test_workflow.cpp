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

#include <doctest.h>

#include <random>

#include <json.hpp>

#include "hetflow/digest.hpp"
#include "hetflow/workflow.hpp"
#include "support.hpp"

using namespace hetflow;
using namespace hetflow::testing;

namespace {

WorkflowGraph hybrid() {
    WorkflowGraph g;
    g.nodes.emplace("extract", LlmNode{"m", "Expression for: {query}", 0.0});
    g.nodes.emplace("calc", CodeNode{"print(1)", {{"expr", "str"}}, "str"});
    g.edges.push_back({"extract", "calc", "expr", std::nullopt});
    g.terminal = "calc";
    return g;
}

}  // namespace

TEST_SUITE("workflow") {

TEST_CASE("behavior descriptor counts nodes and llm share") {
    CHECK(behavior_descriptor(hybrid()) == BehaviorDescriptor{2, 1});
    CHECK(behavior_descriptor(hybrid()).llm_proportion() == doctest::Approx(0.5));
    WorkflowGraph seed;
    seed.nodes.emplace("root", LlmNode{"m", "{query}", 1.0});
    seed.terminal = "root";
    CHECK(behavior_descriptor(seed).llm_proportion() == 1.0);
}

TEST_CASE("a valid hybrid passes validation") {
    CHECK(validate_graph(hybrid()).ok());
}

TEST_CASE("structural violations are reported") {
    SUBCASE("empty graph") {
        CHECK(validate_graph(WorkflowGraph{}).has(ViolationKind::kEmptyGraph));
    }
    SUBCASE("missing terminal") {
        auto g = hybrid();
        g.terminal = "nope";
        CHECK(validate_graph(g).has(ViolationKind::kMissingTerminal));
    }
    SUBCASE("dangling edge") {
        auto g = hybrid();
        g.edges.push_back({"ghost", "calc", "expr2", std::nullopt});
        CHECK(validate_graph(g).has(ViolationKind::kMissingEndpoint));
    }
    SUBCASE("self loop") {
        auto g = hybrid();
        g.edges.push_back({"calc", "calc", "x", std::nullopt});
        CHECK(validate_graph(g).has(ViolationKind::kSelfLoop));
    }
    SUBCASE("two-node cycle") {
        WorkflowGraph g;
        g.nodes.emplace("a", LlmNode{"m", "{query} {b}", 1.0});
        g.nodes.emplace("b", LlmNode{"m", "{a}", 1.0});
        g.edges = {{"a", "b", "a", std::nullopt}, {"b", "a", "b", std::nullopt}};
        g.terminal = "b";
        auto r = validate_graph(g);
        CHECK(r.has(ViolationKind::kCycle));
        CHECK(r.summary().find("cycle") != std::string::npos);
    }
    SUBCASE("unbound code input") {
        auto g = hybrid();
        std::get<CodeNode>(g.nodes["calc"]).inputs["other"] = "str";
        CHECK(validate_graph(g).has(ViolationKind::kUnboundCodeInput));
    }
    SUBCASE("unknown placeholder") {
        auto g = hybrid();
        std::get<LlmNode>(g.nodes["extract"]).instruction = "{query} {missing}";
        CHECK(validate_graph(g).has(ViolationKind::kUnknownPlaceholder));
    }
    SUBCASE("unused binding") {
        auto g = hybrid();
        std::get<CodeNode>(g.nodes["calc"]).inputs.clear();
        CHECK(validate_graph(g).has(ViolationKind::kUnusedBinding));
    }
    SUBCASE("reserved label") {
        auto g = hybrid();
        g.edges[0].label = "query";
        CHECK(validate_graph(g).has(ViolationKind::kReservedLabel));
    }
    SUBCASE("unguarded alternatives are ambiguous, guarded ones are fine") {
        auto g = hybrid();
        g.nodes.emplace("alt", LlmNode{"m", "{query}", 1.0});
        g.edges.push_back({"alt", "calc", "expr", std::nullopt});
        CHECK(validate_graph(g).has(ViolationKind::kAmbiguousBinding));
        g.edges[0].guard = "!is_absent()";
        g.edges[1].guard = "is_absent()";
        CHECK(validate_graph(g).ok());
    }
    SUBCASE("bad guard") {
        auto g = hybrid();
        g.edges[0].guard = "contains(";
        CHECK(validate_graph(g).has(ViolationKind::kInvalidGuard));
    }
    SUBCASE("temperature out of range") {
        auto g = hybrid();
        std::get<LlmNode>(g.nodes["extract"]).temperature = 1.5;
        CHECK(validate_graph(g).has(ViolationKind::kInvalidTemperature));
    }
    SUBCASE("dead node") {
        auto g = hybrid();
        g.nodes.emplace("orphan", LlmNode{"m", "{query}", 1.0});
        CHECK(validate_graph(g).has(ViolationKind::kDeadNode));
    }
}

TEST_CASE("topological order breaks ties lexicographically") {
    WorkflowGraph g;
    for (const char* id : {"d", "c", "b", "a"}) g.nodes.emplace(id, LlmNode{"m", "{query}", 1.0});
    g.edges = {{"d", "a", "x", std::nullopt}, {"c", "b", "y", std::nullopt}};
    CHECK(topological_order(g) == std::vector<NodeId>{"c", "b", "d", "a"});
}

TEST_CASE("topological order matches the permutation oracle") {
    std::mt19937_64 gen(11);
    int acyclic = 0;
    for (int trial = 0; trial < 400; ++trial) {
        FuzzCase fc = random_structure(gen, 6);
        std::vector<std::string> ids;
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& [id, _] : fc.graph.nodes) ids.push_back(id);
        bool self = false;
        for (const auto& e : fc.graph.edges) {
            edges.emplace_back(e.from, e.to);
            self = self || e.from == e.to;
        }
        auto expected = self ? std::vector<std::string>{} : brute_force_topo(ids, edges);
        if (expected.empty()) {
            CHECK_THROWS_AS(topological_order(fc.graph), std::invalid_argument);
        } else {
            ++acyclic;
            CHECK(topological_order(fc.graph) == expected);
        }
    }
    CHECK(acyclic > 50);
}

TEST_CASE("validator agrees with the closure oracle on small graphs") {
    std::mt19937_64 gen(29);
    int accepted = 0, rejected = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        FuzzCase fc = random_structure(gen, 6);
        const bool expected = oracle_accepts(fc);
        CHECK(validate_graph(fc.graph).ok() == expected);
        (expected ? accepted : rejected)++;
    }
    CHECK(accepted > 100);
    CHECK(rejected > 100);
}

TEST_CASE("templates") {
    CHECK(template_placeholders("{a} and {b} and {a} {{literal}} {not valid}") == std::vector<std::string>{"a", "b"});
    std::vector<std::string> unbound;
    CHECK(render_template("x={x} y={y} {{z}}", {{"x", "1"}}, &unbound) == "x=1 y={y} {z}");
    CHECK(unbound == std::vector<std::string>{"y"});
}

TEST_CASE("serialize/deserialize is the identity on random valid graphs") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 300; ++i) {
        WorkflowGraph g = random_valid_graph(gen);
        REQUIRE(validate_graph(g).ok());
        WorkflowGraph back = deserialize(serialize(g));
        CHECK(back == g);
        CHECK(fingerprint(back) == fingerprint(g));
    }
}

TEST_CASE("fingerprint ignores edge order and tracks content") {
    auto g = hybrid();
    g.nodes.emplace("alt", LlmNode{"m", "{query}", 1.0});
    g.edges.push_back({"alt", "calc", "expr", std::string("is_absent()")});
    g.edges[0].guard = "!is_absent()";
    auto h = g;
    std::swap(h.edges[0], h.edges[1]);
    CHECK(fingerprint(g) == fingerprint(h));
    CHECK(fingerprint(g) == sha256_hex(canonical_form(g)));
    std::get<LlmNode>(h.nodes["alt"]).temperature = 0.25;
    CHECK(fingerprint(g) != fingerprint(h));
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("document errors carry locations") {
    SUBCASE("malformed") {
        try {
            deserialize("{\"version\": 1, ");
            FAIL("expected DocumentError");
        } catch (const DocumentError& e) {
            CHECK(e.kind() == DocumentError::Kind::kMalformed);
            CHECK(e.location().rfind("byte", 0) == 0);
        }
    }
    SUBCASE("schema: wrong type points at the field") {
        nlohmann::json doc = nlohmann::json::parse(serialize(hybrid()));
        doc["nodes"]["extract"]["temperature"] = "hot";
        try {
            deserialize(doc.dump());
            FAIL("expected DocumentError");
        } catch (const DocumentError& e) {
            CHECK(e.kind() == DocumentError::Kind::kSchema);
            CHECK(e.location() == "/nodes/extract/temperature");
        }
    }
    SUBCASE("schema: version and unknown keys") {
        nlohmann::json doc = nlohmann::json::parse(serialize(hybrid()));
        doc["version"] = 2;
        CHECK_THROWS_AS(deserialize(doc.dump()), DocumentError);
        doc["version"] = 1;
        doc["extra"] = true;
        CHECK_THROWS_AS(deserialize(doc.dump()), DocumentError);
    }
    SUBCASE("schema: unknown node kind") {
        nlohmann::json doc = nlohmann::json::parse(serialize(hybrid()));
        doc["nodes"]["calc"]["kind"] = "tool";
        CHECK_THROWS_AS(deserialize(doc.dump()), DocumentError);
    }
}

}  // TEST_SUITE
