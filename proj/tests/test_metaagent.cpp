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

#include "hetflow/metaagent.hpp"
#include "support.hpp"

using namespace hetflow;

namespace {

const char* kHybridDoc = R"doc({
  "version": 1,
  "nodes": {
    "extract": {"kind": "llm", "model": "m", "instruction": "Expression: {query}", "temperature": 0.0},
    "calc": {"kind": "code", "source": "print(1)", "inputs": {"expr": "str"}, "output_type": "str"}
  },
  "edges": [{"from": "extract", "to": "calc", "label": "expr"}],
  "terminal": "calc"
})doc";

const char* kCyclicDoc = R"doc({
  "version": 1,
  "nodes": {
    "a": {"kind": "llm", "model": "m", "instruction": "{query} {b}", "temperature": 0.0},
    "b": {"kind": "llm", "model": "m", "instruction": "{a}", "temperature": 0.0}
  },
  "edges": [{"from": "a", "to": "b", "label": "a"}, {"from": "b", "to": "a", "label": "b"}],
  "terminal": "b"
})doc";

RecordPtr seed_record(std::uint64_t uid = 0, std::vector<std::string> logs = {}) {
    auto r = std::make_shared<CandidateRecord>();
    r->uid = uid;
    r->graph.nodes.emplace("root", LlmNode{"m", "Solve: {query}", 1.0});
    r->graph.terminal = "root";
    r->fingerprint = fingerprint(r->graph);
    r->reward = 0.64;
    r->metrics = {0.6, 0.0001, 0.5};
    r->logs = std::move(logs);
    r->descriptor = behavior_descriptor(r->graph);
    return r;
}

std::string fenced(const std::string& doc) { return "Proposal:\n```json\n" + doc + "\n```\nThanks."; }

ScriptRule rule(std::optional<Purpose> p, std::string pattern, std::string response) {
    return ScriptRule{p, std::move(pattern), std::move(response), false, false, 0.0, std::nullopt};
}

}  // namespace

TEST_SUITE("metaagent") {

TEST_CASE("system instruction states the trade-off and protocol") {
    const std::string s = system_instruction(RewardWeights{});
    CHECK(s.find("0.9") != std::string::npos);
    CHECK(s.find("is_absent") != std::string::npos);
    CHECK(s.find("standard input") != std::string::npos);
    CHECK(s.find("@@") == std::string::npos);
}

TEST_CASE("log rendering keeps the newest entries within budget") {
    CHECK(render_logs({}, 100) == "(no failures recorded)");
    std::vector<std::string> logs;
    for (int i = 0; i < 100; ++i) logs.push_back("entry-" + std::to_string(i) + std::string(30, 'x'));
    const std::string out = render_logs(logs, 400);
    CHECK(out.size() <= 400 + 60);
    CHECK(out.find("entry-99") != std::string::npos);
    CHECK(out.find("entry-0x") == std::string::npos);
    CHECK(out.rfind("[... ", 0) == 0);
    CHECK(render_logs(std::vector<std::string>{"a", "b"}, 100) == "a\nb");
}

TEST_CASE("prompt context carries step, metrics, documents and logs") {
    auto parent = seed_record(0, {"q1 [x] FAIL: answer=\"3\" expected=\"4\""});
    EvolutionContext ctx{parent, parent, parent, 7, 40};
    PromptPair p = build_prompt(ctx, "SYSTEM TEXT", 4000);
    CHECK(p.context.find("SYSTEM TEXT") != std::string::npos);
    CHECK(p.context.find("Evolution step 7 of 40") != std::string::npos);
    CHECK(p.context.find("expected=\"4\"") != std::string::npos);
    CHECK(p.context.find("duplicate of top") != std::string::npos);
    CHECK(p.context.find("\"root\"") != std::string::npos);
    CHECK(p.context.find("@@") == std::string::npos);
    CHECK(p.reflect.find(p.context) == 0);
    const std::string gen = p.generate(std::string("add a checker"));
    CHECK(gen.find("add a checker") != std::string::npos);
    CHECK(p.generate(std::nullopt).find("no diagnosis") != std::string::npos);
    CHECK(render_repair(gen, "bad json").find("bad json") != std::string::npos);
}

TEST_CASE("a distinct diverse reference is rendered") {
    auto top = seed_record(0);
    auto other = std::make_shared<CandidateRecord>(*seed_record(1));
    other->graph.nodes.clear();
    other->graph.nodes.emplace("solo", LlmNode{"m", "Other: {query}", 0.5});
    other->graph.terminal = "solo";
    EvolutionContext ctx{top, top, other, 1, 40};
    PromptPair p = build_prompt(ctx, "S", 1000);
    CHECK(p.context.find("duplicate of top") == std::string::npos);
    CHECK(p.context.find("Other: {query}") != std::string::npos);
}

TEST_CASE("fenced extraction") {
    CHECK(extract_fenced_document("x\n```json\n{}\n```") == "{}\n");
    CHECK_FALSE(extract_fenced_document("no fence").has_value());
    CHECK_FALSE(extract_fenced_document("```json\n{ unterminated").has_value());
}

TEST_CASE("synthesis succeeds on a valid hybrid") {
    ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "add a format-check code node"),
                       rule(Purpose::kMetaGenerate, ".", fenced(kHybridDoc))});
    MetaAgent agent(b, MetaAgentConfig{}, RewardWeights{});
    auto parent = seed_record();
    const CandidateRecord before = *parent;
    auto r = agent.synthesize({parent, parent, parent, 1, 40}, true);
    REQUIRE(r.ok());
    CHECK(r.reflection == "add a format-check code node");
    CHECK(behavior_descriptor(*r.candidate) == BehaviorDescriptor{2, 1});
    CHECK(r.transcript.size() == 2);
    CHECK(r.transcript[1].prompt.find("add a format-check code node") != std::string::npos);
    CHECK(r.prompt_tokens > 0);
    CHECK(*parent == before);
}

TEST_CASE("reflection can be disabled") {
    ScriptedBackend b({rule(Purpose::kMetaGenerate, ".", fenced(kHybridDoc))});
    MetaAgent agent(b, MetaAgentConfig{}, RewardWeights{});
    auto parent = seed_record();
    auto r = agent.synthesize({parent, parent, parent, 1, 40}, false);
    REQUIRE(r.ok());
    CHECK(r.transcript.size() == 1);
    CHECK(r.transcript[0].prompt.find("no diagnosis") != std::string::npos);
}

TEST_CASE("rejections carry reasons") {
    auto parent = seed_record();
    EvolutionContext ctx{parent, parent, parent, 1, 40};
    SUBCASE("cycle") {
        ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "d"), rule(Purpose::kMetaGenerate, ".", fenced(kCyclicDoc))});
        auto r = MetaAgent(b, MetaAgentConfig{}, RewardWeights{}).synthesize(ctx, true);
        CHECK_FALSE(r.ok());
        CHECK(r.reason == RejectReason::kValidationFailure);
        CHECK(r.detail.find("cycle") != std::string::npos);
    }
    SUBCASE("unparseable twice") {
        ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "d"), rule(Purpose::kMetaGenerate, ".", "just prose")});
        auto r = MetaAgent(b, MetaAgentConfig{}, RewardWeights{}).synthesize(ctx, true);
        CHECK(r.reason == RejectReason::kParseFailure);
        CHECK(r.transcript.size() == 3);
        CHECK(r.transcript[2].prompt.find("could not be parsed") != std::string::npos);
    }
    SUBCASE("repair succeeds") {
        ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "d"),
                           rule(Purpose::kMetaGenerate, "could not be parsed", fenced(kHybridDoc)),
                           rule(Purpose::kMetaGenerate, ".", "```json\n{ broken\n```")});
        auto r = MetaAgent(b, MetaAgentConfig{}, RewardWeights{}).synthesize(ctx, true);
        CHECK(r.ok());
    }
    SUBCASE("schema violation is not retried") {
        ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "d"),
                           rule(Purpose::kMetaGenerate, ".", fenced(R"doc({"version": 1, "nodes": {}, "edges": []})doc"))});
        auto r = MetaAgent(b, MetaAgentConfig{}, RewardWeights{}).synthesize(ctx, true);
        CHECK(r.reason == RejectReason::kSchemaViolation);
        CHECK(r.transcript.size() == 2);
    }
    SUBCASE("backend failure during reflection") {
        ScriptedBackend b({ScriptRule{Purpose::kMetaReflect, ".", "", false, false, 0.0, BackendError::Kind::kTransport}});
        auto r = MetaAgent(b, MetaAgentConfig{}, RewardWeights{}).synthesize(ctx, true);
        CHECK(r.reason == RejectReason::kBackendFailure);
    }
    SUBCASE("code that does not parse") {
        std::string doc = kHybridDoc;
        doc.replace(doc.find("print(1)"), 8, "def (:");
        ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "d"), rule(Purpose::kMetaGenerate, ".", fenced(doc))});
        Sandbox checker;
        auto r = MetaAgent(b, MetaAgentConfig{}, RewardWeights{}, &checker).synthesize(ctx, true);
        CHECK(r.reason == RejectReason::kValidationFailure);
        CHECK(r.detail.find("syntax") != std::string::npos);
    }
}

TEST_CASE("synthesis is deterministic under a scripted backend") {
    ScriptedBackend b({rule(Purpose::kMetaReflect, ".", "d"), rule(Purpose::kMetaGenerate, ".", fenced(kHybridDoc))});
    MetaAgent agent(b, MetaAgentConfig{}, RewardWeights{});
    auto parent = seed_record();
    auto a = agent.synthesize({parent, parent, parent, 3, 40}, true);
    auto c = agent.synthesize({parent, parent, parent, 3, 40}, true);
    CHECK(a.candidate == c.candidate);
    CHECK(a.transcript[0].prompt == c.transcript[0].prompt);
    CHECK(a.prompt_tokens == c.prompt_tokens);
}

}  // TEST_SUITE
