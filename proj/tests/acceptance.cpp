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

// Acceptance run. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetflow/driver.hpp"
#include "support.hpp"

using namespace hetflow;
using json = nlohmann::json;

namespace {

struct Verdict {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Independent oracles

// Node-count bins [1,2) [2,3) [3,4) [4,6) [6,9) [9,inf); five LLM-share bins.
Cell oracle_cell(int nodes, int llm) {
    static const int edges[] = {1, 2, 3, 4, 6, 9};
    int nb = 0;
    for (int i = 0; i < 6; ++i)
        if (nodes >= edges[i]) nb = i;
    int lb = 0;
    while (lb < 4 && (lb + 1) * nodes <= 5 * llm) ++lb;
    return Cell{nb, lb};
}

double oracle_utility(double x, double alpha) { return 1.0 / (1.0 + alpha * x); }

double oracle_reward(double s, double c, double t) {
    return 0.9 * s + 0.05 * oracle_utility(c, 5.0) + 0.05 * oracle_utility(t, 1.0 / 60.0);
}

std::size_t oracle_words(const std::string& s) {
    std::istringstream in(s);
    std::string w;
    std::size_t n = 0;
    while (in >> w) ++n;
    return n;
}

std::string regex_escape(const std::string& s) {
    static const std::string special = R"(\^$.|?*+()[]{}/)";
    std::string out;
    for (char c : s) {
        if (special.find(c) != std::string::npos) out += '\\';
        out += c;
    }
    return out;
}

RecordPtr make_record(std::uint64_t uid, int nodes, int llm, double reward) {
    auto r = std::make_shared<CandidateRecord>();
    r->uid = uid;
    r->reward = reward;
    r->descriptor = BehaviorDescriptor{nodes, llm};
    return r;
}

// ---------------------------------------------------------------------------
// Scripted runs on the arithmetic fixture

std::filesystem::path fixture(const std::string& name) { return testing::fixture_dir() / name; }

struct FixtureRun {
    RunConfig config;
    std::vector<Task> tasks;
    BackendStack task;
    BackendStack meta;
    Engine engine;

    explicit FixtureRun(RunConfig c)
        : config(c),
          tasks(load_dataset(c.dataset)),
          task(c.task_backend, c.retry),
          meta(c.meta_backend, c.retry),
          engine(c, tasks, task.top(), meta.top()) {}
};

RunConfig fixture_config() { return RunConfig::from_file(fixture("config.json")); }

std::string report_bytes(const RunState& s) {
    RunReport r = make_report(s);
    return r.convergence_tsv + "\x1e" + r.landscape_tsv + "\x1e" + r.lineage_tsv + "\x1e" + r.summary_json;
}

// ---------------------------------------------------------------------------
// Criteria

Verdict reward_arithmetic() {
    Verdict v;
    const RewardWeights w = RunConfig::reference_preset().weights;
    const double r = composite_reward(QueryMetrics{1.0, 0.0, 0.0}, w);
    v.require(std::abs(r - 1.0) <= 1e-12, "R(S=1,C=0,T=0)=" + fixed(r, 15));
    v.require(std::abs(utility(0.2, 5.0) - 0.5) <= 1e-12, "utility(0.2, 5)");
    v.require(std::abs(utility(60.0, 1.0 / 60.0) - 0.5) <= 1e-12, "utility(60, 1/60)");
    return v;
}

Verdict archive_oracle() {
    Verdict v;
    const GridConfig grid;
    std::mt19937_64 gen(2026);
    const int sequences = 60, per_sequence = 250;
    int mismatches = 0;
    for (int seq = 0; seq < sequences; ++seq) {
        IslandState island;
        std::vector<RecordPtr> inserted;
        for (int i = 0; i < per_sequence; ++i) {
            const int nodes = 1 + static_cast<int>(gen() % 12);
            const int llm = static_cast<int>(gen() % static_cast<unsigned>(nodes + 1));
            // Coarse rewards so that ties are frequent.
            const double reward = static_cast<double>(gen() % 20) / 20.0;
            auto rec = make_record(static_cast<std::uint64_t>(i), nodes, llm, reward);
            inserted.push_back(rec);
            archive_update(island, rec, grid);
        }
        // Champion per cell: highest reward, earliest arrival among equals.
        std::map<Cell, RecordPtr> expected;
        for (const auto& rec : inserted) {
            const Cell c = oracle_cell(rec->descriptor.node_count, rec->descriptor.llm_count);
            auto it = expected.find(c);
            if (it == expected.end() || rec->reward > it->second->reward) expected[c] = rec;
        }
        bool same = expected.size() == island.archive.size();
        for (const auto& [cell, rec] : expected) {
            auto it = island.archive.find(cell);
            same = same && it != island.archive.end() && it->second.record->uid == rec->uid;
        }
        if (!same) ++mismatches;
    }
    v.require(mismatches == 0, std::to_string(mismatches) + " sequences disagree");
    v.note(std::to_string(sequences) + "x" + std::to_string(per_sequence) + " inserts");
    return v;
}

Verdict selection_distribution() {
    Verdict v;
    IslandState island;
    const GridConfig grid;
    std::vector<RecordPtr> global;
    for (int i = 0; i < 6; ++i) {
        auto r = make_record(static_cast<std::uint64_t>(i), 1 + i, 1, 0.1 * i);
        global.push_back(r);
        if (i < 4) archive_update(island, r, grid);
    }
    SamplerConfig sampler{0.3, 0.5};
    Rng branch = Rng::substream(4242, "branch");
    Rng pool = Rng::substream(4242, "pool");
    const int draws = 10000;
    std::map<ParentPool, int> hits;
    for (int i = 0; i < draws; ++i) hits[sample_parent(island, global, sampler, branch, pool).pool]++;
    const double f1 = hits[ParentPool::kIslandHistory] / double(draws);
    const double f2 = hits[ParentPool::kIslandArchive] / double(draws);
    const double f3 = hits[ParentPool::kGlobalHistory] / double(draws);
    v.require(std::abs(f1 - 0.3) <= 0.02 && std::abs(f2 - 0.5) <= 0.02 && std::abs(f3 - 0.2) <= 0.02,
              "frequencies out of tolerance");
    v.note("(" + fixed(f1, 4) + ", " + fixed(f2, 4) + ", " + fixed(f3, 4) + ")");
    return v;
}

Verdict code_determinism() {
    Verdict v;
    ScriptedBackend backend(std::vector<ScriptRule>{});
    CostTable costs;
    Sandbox sandbox;
    Executor ex(backend, costs, &sandbox, ExecutorConfig{});
    WorkflowGraph g;
    g.nodes.emplace("parse", CodeNode{"import json, re, sys\nq = json.load(sys.stdin)['query']\n"
                                      "print(json.dumps([int(x) for x in re.findall(r'-?\\d+', q)]))",
                                      {}, "str"});
    g.nodes.emplace("sum", CodeNode{"import json, sys\nd = json.load(sys.stdin)\n"
                                    "xs = json.loads(d['nums'])\nprint(sum(x * x for x in xs), {'h': hash('salt')}['h'] % 97)",
                                    {{"nums", "str"}}, "str"});
    g.nodes.emplace("fmt", CodeNode{"import json, sys\nd = json.load(sys.stdin)\nprint('answer: ' + d['total'])",
                                    {{"total", "str"}}, "str"});
    g.edges = {{"parse", "sum", "nums", std::nullopt}, {"sum", "fmt", "total", std::nullopt}};
    g.terminal = "fmt";
    v.require(validate_graph(g).ok(), "workflow invalid");
    std::optional<std::string> first;
    int differing = 0;
    double max_cost = 0.0;
    for (int i = 0; i < 100; ++i) {
        auto t = ex.execute(g, "Squares of 3, 4 and -12 summed");
        if (!t.answer) {
            v.require(false, "run " + std::to_string(i) + " failed");
            break;
        }
        if (!first) first = *t.answer;
        if (*t.answer != *first) ++differing;
        max_cost = std::max(max_cost, t.total_cost);
    }
    v.require(differing == 0, std::to_string(differing) + " answers differ");
    v.require(max_cost == 0.0, "nonzero cost");
    if (first) v.note("answer \"" + *first + "\"");
    return v;
}

Verdict gate_budget() {
    Verdict v;
    const std::string compute_doc = json{{"version", 1},
                                         {"nodes",
                                          {{"solve",
                                            {{"kind", "llm"},
                                             {"model", "gpt-4o-mini"},
                                             {"instruction", "Compute exactly: {query}"},
                                             {"temperature", 0.0}}}}},
                                         {"edges", json::array()},
                                         {"terminal", "solve"}}
                                        .dump();
    const std::string failing_doc = testing::read_file(fixture("workflows/double_check.json"));

    json meta_script = {{"rules",
                         {{{"purpose", "meta_reflect"}, {"match", "."}, {"response", "alternate"}},
                          {{"purpose", "meta_generate"},
                           {"match", "Evolution step [0-9]*[13579] of "},
                           {"response", "```json\n" + compute_doc + "\n```"}},
                          {{"purpose", "meta_generate"},
                           {"match", "Evolution step [0-9]*[02468] of "},
                           {"response", "```json\n" + failing_doc + "\n```"}}}}};

    RunConfig base = fixture_config();
    const auto tasks = load_dataset(base.dataset);
    json task_script = json::parse(testing::read_file(fixture("task_script.json")));
    json rules = json::array();
    for (const auto& t : tasks)
        rules.push_back({{"match", "^Compute exactly: " + regex_escape(t.query) + "$"},
                         {"response", t.gold_answer},
                         {"wall_time", 0.5}});
    for (const auto& r : task_script["rules"]) rules.push_back(r);
    task_script["rules"] = rules;

    base.split = SplitConfig{0.5, GammaMode::kAbsolute};
    auto run = [&](bool gated, std::vector<std::string>& statuses) {
        RunConfig c = base;
        c.ablation.disable_gate = !gated;
        ScriptedBackend task = ScriptedBackend::from_json(task_script);
        ScriptedBackend meta = ScriptedBackend::from_json(meta_script);
        Engine engine(c, tasks, task, meta);
        engine.initialize();
        while (!engine.done()) statuses.push_back(engine.step().row.status);
        return engine.state().total_queries;
    };

    std::vector<std::string> gated_status, ungated_status;
    const std::size_t gated = run(true, gated_status);
    const std::size_t ungated = run(false, ungated_status);

    const std::size_t d = tasks.size();
    const std::size_t stage1 = (d + 1) / 2;
    std::size_t closed_gated = d, closed_ungated = d;  // the seed is always evaluated in full
    bool alternates = gated_status.size() == static_cast<std::size_t>(base.iterations);
    for (int t = 1; t <= base.iterations; ++t) {
        const bool pass = t % 2 == 1;
        closed_gated += pass ? d : stage1;
        closed_ungated += d;
        if (alternates) alternates = gated_status[static_cast<std::size_t>(t - 1)] == (pass ? "completed" : "screened_out");
    }
    v.require(alternates, "candidates do not alternate pass/fail");
    v.require(gated == closed_gated, "gated " + std::to_string(gated) + " != closed form " + std::to_string(closed_gated));
    v.require(ungated == closed_ungated,
              "ungated " + std::to_string(ungated) + " != closed form " + std::to_string(closed_ungated));
    const double saving = 1.0 - double(gated) / double(ungated);
    v.require(saving >= 0.40, "saving " + fixed(100 * saving, 1) + "% < 40%");
    v.note("gated " + std::to_string(gated) + " vs ungated " + std::to_string(ungated) + " queries, saving " +
           fixed(100 * saving, 1) + "%");
    return v;
}

Verdict migration() {
    Verdict v;
    FixtureRun run(fixture_config());
    v.require(run.config.islands == 2 && run.config.migration_interval == 15 && run.config.iterations == 40,
              "fixture is not K=2, interval 15, 40 iterations");
    run.engine.initialize();
    std::vector<int> fired;
    int admitted_total = 0;
    while (!run.engine.done()) {
        IterationRecord it = run.engine.step();
        if (!it.migration) continue;
        fired.push_back(it.row.t);
        const auto& pre = it.pre_migration;
        const auto& post = run.engine.state().islands;
        const std::size_t k = pre.size();
        for (std::size_t dst = 0; dst < k; ++dst) {
            const IslandState& src = pre[(dst + k - 1) % k];
            std::vector<const ArchiveEntry*> ranked;
            for (const auto& [cell, e] : src.archive) ranked.push_back(&e);
            std::stable_sort(ranked.begin(), ranked.end(), [](const ArchiveEntry* a, const ArchiveEntry* b) {
                if (a->record->reward != b->record->reward) return a->record->reward > b->record->reward;
                return a->stamp < b->stamp;
            });
            if (ranked.size() > 2) ranked.resize(2);

            std::map<Cell, std::uint64_t> expected;
            std::map<Cell, double> best;
            for (const auto& [cell, e] : pre[dst].archive) {
                expected[cell] = e.record->uid;
                best[cell] = e.record->reward;
            }
            for (const ArchiveEntry* e : ranked) {
                const Cell c = oracle_cell(e->record->descriptor.node_count, e->record->descriptor.llm_count);
                if (!best.count(c) || e->record->reward > best[c]) {
                    if (!expected.count(c) || expected[c] != e->record->uid) ++admitted_total;
                    expected[c] = e->record->uid;
                    best[c] = e->record->reward;
                }
            }
            std::map<Cell, std::uint64_t> actual;
            for (const auto& [cell, e] : post[dst].archive) actual[cell] = e.record->uid;
            v.require(actual == expected, "island " + std::to_string(dst) + " archive mismatch at t=" +
                                              std::to_string(it.row.t));
        }
    }
    v.require(fired == std::vector<int>{15, 30}, "migrations fired at unexpected iterations");
    v.note("migrations at t=15,30; " + std::to_string(admitted_total) + " elites admitted");
    return v;
}

Verdict end_to_end(std::string& state_out, std::string& report_out) {
    Verdict v;
    std::string first_state, first_report;
    for (int rep = 0; rep < 2; ++rep) {
        FixtureRun run(fixture_config());
        run.engine.initialize();
        run.engine.run();
        const RunState& s = run.engine.state();
        const std::string state = state_to_json(s).dump();
        const std::string report = report_bytes(s);
        if (rep == 0) {
            first_state = state;
            first_report = report;

            const WorkflowGraph seed = s.global_history.front()->graph;
            v.require(seed.nodes.size() == 1 && std::holds_alternative<LlmNode>(seed.nodes.begin()->second),
                      "seed is not a single LLM node");

            // 60% direct accuracy for the seed.
            v.require(std::abs(s.global_history.front()->metrics.score - 0.6) <= 1e-12, "seed accuracy is not 60%");

            const WorkflowGraph hybrid = deserialize(testing::read_file(fixture("workflows/hybrid.json")));
            v.require(s.best->graph == hybrid, "best workflow is not the scripted hybrid");

            // Expected reward of the hybrid from the fixture prices and timings.
            const auto& extract = std::get<LlmNode>(hybrid.nodes.at("extract"));
            double total = 0.0;
            const auto tasks = load_dataset(run.config.dataset);
            for (const auto& t : tasks) {
                std::string prompt = extract.instruction;
                prompt.replace(prompt.find("{query}"), 7, t.query);
                const double cost = (oracle_words(prompt) * 0.00015 + 3 * 0.0006) / 1000.0;
                total += oracle_reward(1.0, cost, 0.4 + 0.05);
            }
            const double expected = total / static_cast<double>(tasks.size());
            v.require(std::abs(s.best->reward - expected) <= 1e-9,
                      "best reward " + fixed(s.best->reward, 12) + " != oracle " + fixed(expected, 12));
            v.require(s.best->reward >= 0.99, "best reward below 0.99");

            double prev = -1.0;
            bool monotone = true;
            for (const auto& row : s.convergence) {
                monotone = monotone && row.best_so_far >= prev;
                prev = row.best_so_far;
            }
            v.require(monotone, "best-so-far decreases");
            v.require(s.invalid_count >= 2, "decoys were not logged as invalid");
            bool saw_cycle = false, saw_parse = false;
            for (const auto& row : s.convergence) {
                saw_cycle = saw_cycle || row.status == "invalid:validation-failure";
                saw_parse = saw_parse || row.status == "invalid:parse-failure";
            }
            v.require(saw_cycle && saw_parse, "cyclic and unparseable decoys missing from the log");
            v.require(s.t == 40, "run stopped early");
            v.note("best reward " + fixed(s.best->reward, 6) + ", " + std::to_string(s.invalid_count) + " invalid");
        } else {
            v.require(state == first_state, "state differs between runs");
            v.require(report == first_report, "reports differ between runs");
        }
    }
    state_out = first_state;
    report_out = first_report;
    return v;
}

Verdict checkpoint_fidelity(const std::string& reference_state, const std::string& reference_report) {
    Verdict v;
    const auto dir = testing::scratch_dir("acceptance-ckpt");
    const auto path = dir / "checkpoint.json";
    {
        FixtureRun first(fixture_config());
        first.engine.initialize();
        first.engine.run(5, path);
        v.require(first.engine.state().t == 5, "first leg did not stop at t=5");
    }
    FixtureRun second(fixture_config());
    second.engine.resume(read_checkpoint(path).state);
    second.engine.run(std::nullopt, path);
    const RunState& s = second.engine.state();
    v.require(state_to_json(s).dump() == reference_state, "state differs from the uninterrupted run");
    v.require(report_bytes(s) == reference_report, "reports differ from the uninterrupted run");
    const json ref = json::parse(reference_state);
    const json got = state_to_json(s);
    v.require(got.at("records") == ref.at("records"), "global history differs");
    v.require(got.at("best") == ref.at("best"), "best workflow differs");
    std::filesystem::remove_all(dir);
    return v;
}

Verdict ir_roundtrip() {
    Verdict v;
    std::mt19937_64 gen(777);
    int broken = 0;
    for (int i = 0; i < 1000; ++i) {
        WorkflowGraph g = testing::random_valid_graph(gen);
        if (!validate_graph(g).ok() || deserialize(serialize(g)) != g) ++broken;
    }
    v.require(broken == 0, std::to_string(broken) + " of 1000 graphs failed the round trip");

    int disagreements = 0, accepted = 0, rejected = 0;
    for (int i = 0; i < 5000; ++i) {
        testing::FuzzCase fc = testing::random_structure(gen, 6);
        const bool expected = testing::oracle_accepts(fc);
        if (validate_graph(fc.graph).ok() != expected) ++disagreements;
        (expected ? accepted : rejected)++;
    }
    v.require(disagreements == 0, std::to_string(disagreements) + " validator disagreements");
    v.note("fuzz corpus " + std::to_string(accepted) + " valid / " + std::to_string(rejected) + " invalid");
    return v;
}

}  // namespace

int main() {
    int failures = 0;
    auto criterion = [&](int n, const std::string& name, double budget_seconds, const std::function<Verdict()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = body();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        v.require(took < budget_seconds, "runtime over " + fixed(budget_seconds, 0) + " s");
        if (!v.ok) ++failures;
        std::cout << (v.ok ? "[PASS] " : "[FAIL] ") << n << ". " << name << " (" << fixed(took, 2) << " s)";
        if (!v.detail.empty()) std::cout << ": " << v.detail;
        std::cout << std::endl;
    };

    std::string state, report;
    criterion(1, "reward arithmetic", 1.0, reward_arithmetic);
    criterion(2, "archive matches brute-force oracle", 10.0, archive_oracle);
    criterion(3, "parent selection branch frequencies", 5.0, selection_distribution);
    criterion(4, "code-only workflow is deterministic and free", 30.0, code_determinism);
    criterion(5, "cascaded gate query budget", 30.0, gate_budget);
    criterion(6, "ring migration", 60.0, migration);
    criterion(7, "scripted end-to-end evolution", 120.0, [&] { return end_to_end(state, report); });
    criterion(8, "checkpoint resume fidelity", 120.0, [&] { return checkpoint_fidelity(state, report); });
    criterion(9, "IR round trip and validator oracle", 30.0, ir_roundtrip);

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
