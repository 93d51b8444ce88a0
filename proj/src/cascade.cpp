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

#include "hetflow/cascade.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "hetflow/text.hpp"

namespace hetflow {

double effective_gamma(const SplitConfig& split, double current_best_reward) {
    return split.mode == GammaMode::kAbsolute ? split.gamma : split.gamma * current_best_reward;
}

std::string_view to_string(EvalStatus status) {
    switch (status) {
        case EvalStatus::kScreenedOut: return "screened_out";
        case EvalStatus::kCompleted: return "completed";
        case EvalStatus::kInvalid: return "invalid";
    }
    return "unknown";
}

MetricsSummary EvalOutcome::mean_metrics() const {
    MetricsSummary s;
    if (metrics.empty()) return s;
    for (const auto& m : metrics) {
        s.score += m.score;
        s.cost += m.cost;
        s.latency += m.latency;
    }
    const double n = static_cast<double>(metrics.size());
    s.score /= n;
    s.cost /= n;
    s.latency /= n;
    return s;
}

namespace {

std::string clip(std::string_view s, std::size_t n) {
    std::string out(s.substr(0, n));
    for (auto& c : out)
        if (c == '\n') c = ' ';
    if (s.size() > n) out += "...";
    return out;
}

}  // namespace

QueryResult evaluate_query(const WorkflowGraph& graph, const Task& task, std::size_t index, const Executor& executor) {
    QueryResult qr;
    ExecutionTrace trace = executor.execute(graph, task.query);
    qr.metrics.cost = trace.total_cost;
    qr.metrics.latency = trace.total_latency;

    if (trace.answer) {
        if (task.mode == TaskMode::kMath)
            qr.metrics.score = score_math(*trace.answer, task.gold_answer);
        else
            qr.metrics.score = score_code(*trace.answer, task.tests, executor.sandbox(), executor.config().limits);
    }
    qr.passed = qr.metrics.score >= 1.0;

    const std::string tag = "q" + std::to_string(index) + " [" + task.id + "]";
    if (qr.passed) {
        qr.log.push_back(tag + " PASS");
        return qr;
    }
    std::string verdict = tag + " FAIL";
    if (!trace.answer) {
        verdict += ": no answer (terminal ABSENT)";
    } else {
        verdict += ": answer=\"" + clip(*trace.answer, 160) + "\"";
        if (task.mode == TaskMode::kMath) verdict += " expected=\"" + clip(task.gold_answer, 80) + "\"";
        else verdict += " (program failed its tests)";
    }
    verdict += " query=\"" + clip(task.query, 160) + "\"";
    qr.log.push_back(verdict);
    for (const auto& ev : trace.log)
        if (ev.kind == "error" || ev.kind == "skip") qr.log.push_back("  " + ev.node + " " + ev.kind + ": " + clip(ev.detail, 300));
    return qr;
}

namespace {

// Evaluates tasks[begin, end) with up to `width` threads; results land by index.
void run_range(const WorkflowGraph& graph, std::span<const Task> tasks, std::size_t begin, std::size_t end,
               const EvalEnvironment& env, std::vector<QueryResult>& results) {
    const std::size_t count = end - begin;
    const std::size_t width = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(env.width, 1)), 1, std::max<std::size_t>(count, 1));
    std::atomic<std::size_t> next{begin};
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= end) return;
            try {
                results[i] = evaluate_query(graph, tasks[i], i, *env.executor);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next.store(end);
                return;
            }
        }
    };
    if (width <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

EvalOutcome cascaded_eval(const WorkflowGraph& graph, std::span<const Task> dataset, std::optional<double> gamma,
                          const EvalEnvironment& env) {
    if (!env.executor) throw std::invalid_argument("cascaded_eval: no executor");
    if (dataset.empty()) throw std::invalid_argument("cascaded_eval: empty dataset");
    EvalOutcome out;
    if (ValidationReport report = validate_graph(graph); !report.ok()) {
        out.status = EvalStatus::kInvalid;
        out.logs.push_back("invalid workflow: " + report.summary());
        out.failure_logs = out.logs;
        return out;
    }

    const std::size_t n = dataset.size();
    const std::size_t half = stage1_size(n);
    std::vector<QueryResult> results(n);

    run_range(graph, dataset, 0, half, env, results);
    std::vector<QueryMetrics> stage1;
    for (std::size_t i = 0; i < half; ++i) stage1.push_back(results[i].metrics);
    out.stage1_reward = aggregate_reward(stage1, env.weights);

    std::size_t executed = half;
    if (gamma && out.stage1_reward <= *gamma) {
        out.status = EvalStatus::kScreenedOut;
    } else {
        run_range(graph, dataset, half, n, env, results);
        executed = n;
        out.status = EvalStatus::kCompleted;
    }
    out.queries_executed = executed;

    for (std::size_t i = 0; i < executed; ++i) out.metrics.push_back(results[i].metrics);
    if (out.status == EvalStatus::kCompleted) out.reward = aggregate_reward(out.metrics, env.weights);

    for (std::size_t i = 0; i < executed; ++i)
        if (!results[i].passed)
            for (const auto& line : results[i].log) out.failure_logs.push_back(line);
    out.logs = out.failure_logs;
    for (std::size_t i = 0; i < executed; ++i)
        if (results[i].passed)
            for (const auto& line : results[i].log) out.logs.push_back(line);
    if (out.status == EvalStatus::kScreenedOut)
        out.logs.push_back("screened out: stage-1 reward " + format_real(out.stage1_reward, 6) + " <= gamma " +
                           format_real(*gamma, 6));
    return out;
}

}  // namespace hetflow
