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

// Command-line front end: evolve, evaluate, exec, validate, report.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hetflow/driver.hpp"
#include "hetflow/text.hpp"

namespace {

using namespace hetflow;
using json = nlohmann::json;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunConfig load_config(const std::string& path) {
    return path.empty() ? RunConfig::reference_preset() : RunConfig::from_file(path);
}

WorkflowGraph load_workflow(const std::string& path) {
    WorkflowGraph g = deserialize(slurp(path));
    if (ValidationReport r = validate_graph(g); !r.ok()) throw std::runtime_error("invalid workflow: " + r.summary());
    return g;
}

int cmd_evolve(const std::string& config_path, const std::string& resume, std::optional<int> stop_at) {
    RunConfig config = load_config(config_path);
    if (config.dataset.empty()) throw std::runtime_error("config has no dataset");
    std::vector<Task> dataset = load_dataset(config.dataset);
    BackendStack task(config.task_backend, config.retry);
    BackendStack meta(config.meta_backend, config.retry);
    Engine engine(config, std::move(dataset), task.top(), meta.top());

    const fs::path checkpoint = config.output_dir / "checkpoint.json";
    if (!resume.empty()) {
        LoadedCheckpoint loaded = read_checkpoint(resume);
        engine.resume(std::move(loaded.state));
        std::cerr << "resumed at iteration " << engine.state().t << "\n";
    } else {
        engine.initialize();
        write_checkpoint(engine.state(), engine.config(), checkpoint);
        std::cerr << "seed reward " << format_real(engine.state().best->reward, 6) << "\n";
    }
    engine.run(stop_at, checkpoint);
    make_report(engine.state()).write(config.output_dir);

    const RecordPtr& best = engine.state().best;
    std::cout << "best reward " << format_real(best->reward, 10) << " (uid " << best->uid << ", "
              << best->descriptor.node_count << " nodes)\n"
              << serialize(best->graph) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& workflow, const std::string& dataset_path) {
    RunConfig config = load_config(config_path);
    WorkflowGraph g = load_workflow(workflow);
    std::vector<Task> dataset = load_dataset(dataset_path);
    BackendStack task(config.task_backend, config.retry);
    std::unique_ptr<Sandbox> sandbox;
    try {
        sandbox = std::make_unique<Sandbox>(config.sandbox);
    } catch (const SandboxUnavailable& e) {
        std::cerr << "warning: " << e.what() << "\n";
    }
    Executor executor(task.top(), config.costs, sandbox.get(), config.executor);
    EvalOutcome out = cascaded_eval(g, dataset, std::nullopt, EvalEnvironment{&executor, config.weights, config.parallelism});
    MetricsSummary m = out.mean_metrics();
    json j{{"status", to_string(out.status)},
           {"reward", out.reward ? json(*out.reward) : json(nullptr)},
           {"score", m.score},
           {"cost", m.cost},
           {"latency", m.latency},
           {"queries", out.queries_executed},
           {"failures", out.failure_logs}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_exec(const std::string& config_path, const std::string& workflow, const std::string& query) {
    RunConfig config = load_config(config_path);
    WorkflowGraph g = load_workflow(workflow);
    BackendStack task(config.task_backend, config.retry);
    std::unique_ptr<Sandbox> sandbox;
    try {
        sandbox = std::make_unique<Sandbox>(config.sandbox);
    } catch (const SandboxUnavailable& e) {
        std::cerr << "warning: " << e.what() << "\n";
    }
    Executor executor(task.top(), config.costs, sandbox.get(), config.executor);
    ExecutionTrace trace = executor.execute(g, query);
    for (const auto& ev : trace.log) std::cerr << ev.node << "\t" << ev.kind << "\t" << ev.detail << "\n";
    std::cerr << "cost " << format_real(trace.total_cost, 6) << " USD, latency "
              << format_real(trace.total_latency, 6) << " s\n";
    if (!trace.answer) {
        std::cerr << "no answer: terminal output is ABSENT\n";
        return 1;
    }
    std::cout << *trace.answer << "\n";
    return 0;
}

int cmd_validate(const std::string& workflow) {
    WorkflowGraph g = deserialize(slurp(workflow));
    ValidationReport r = validate_graph(g);
    if (!r.ok()) {
        for (const auto& v : r.violations) std::cout << to_string(v.kind) << ": " << v.detail << "\n";
        return 1;
    }
    BehaviorDescriptor d = behavior_descriptor(g);
    std::cout << "ok: " << d.node_count << " nodes, " << d.llm_count << " llm, fingerprint " << fingerprint(g) << "\n";
    return 0;
}

int cmd_report(const std::string& state_path, const std::string& out_dir) {
    LoadedCheckpoint loaded = read_checkpoint(state_path);
    RunReport rep = make_report(loaded.state);
    if (out_dir.empty()) {
        std::cout << rep.convergence_tsv << "\n" << rep.summary_json;
    } else {
        rep.write(out_dir);
        std::cout << "report written to " << out_dir << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hetflow: evolutionary search over LLM/code workflows"};
    app.require_subcommand(1);

    std::string config, resume, workflow, dataset, query, state, out;
    std::optional<int> stop_at;

    auto* evolve = app.add_subcommand("evolve", "run the search");
    evolve->add_option("--config", config, "run configuration (JSON)")->required();
    evolve->add_option("--resume", resume, "checkpoint to continue from");
    evolve->add_option("--stop-at", stop_at, "stop after this iteration");

    auto* evaluate = app.add_subcommand("evaluate", "score a workflow on a dataset (no gate)");
    evaluate->add_option("--config", config, "run configuration (JSON)");
    evaluate->add_option("--workflow", workflow, "workflow document")->required();
    evaluate->add_option("--dataset", dataset, "dataset (JSONL)")->required();

    auto* exec = app.add_subcommand("exec", "run a workflow on one query");
    exec->add_option("--config", config, "run configuration (JSON)");
    exec->add_option("--workflow", workflow, "workflow document")->required();
    exec->add_option("--query", query, "input query")->required();

    auto* validate = app.add_subcommand("validate", "check a workflow document");
    validate->add_option("--workflow", workflow, "workflow document")->required();

    auto* report = app.add_subcommand("report", "render reports from a checkpoint");
    report->add_option("--state", state, "checkpoint file")->required();
    report->add_option("--out", out, "output directory (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*evolve) return cmd_evolve(config, resume, stop_at);
        if (*evaluate) return cmd_evaluate(config, workflow, dataset);
        if (*exec) return cmd_exec(config, workflow, query);
        if (*validate) return cmd_validate(workflow);
        if (*report) return cmd_report(state, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
