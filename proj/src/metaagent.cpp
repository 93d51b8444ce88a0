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

#include "hetflow/metaagent.hpp"

#include "hetflow/prompt_assets.hpp"
#include "hetflow/text.hpp"

namespace hetflow {

std::string system_instruction(const RewardWeights& w) {
    return fill_slots(prompts::k_system_v1, {{"lambda_perf", format_real(w.lambda_perf, 6)},
                                             {"lambda_cost", format_real(w.lambda_cost, 6)},
                                             {"lambda_time", format_real(w.lambda_time, 6)},
                                             {"alpha_cost", format_real(w.alpha_cost, 6)},
                                             {"alpha_time", format_real(w.alpha_time, 6)}});
}

std::string_view to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::kNone: return "none";
        case RejectReason::kBackendFailure: return "backend-failure";
        case RejectReason::kParseFailure: return "parse-failure";
        case RejectReason::kSchemaViolation: return "schema-violation";
        case RejectReason::kValidationFailure: return "validation-failure";
    }
    return "unknown";
}

std::string render_logs(std::span<const std::string> logs, std::size_t budget_bytes) {
    if (logs.empty()) return "(no failures recorded)";
    std::size_t used = 0;
    std::size_t keep = 0;
    for (auto it = logs.rbegin(); it != logs.rend(); ++it) {
        if (used + it->size() + 1 > budget_bytes) break;
        used += it->size() + 1;
        ++keep;
    }
    std::string out;
    const std::size_t dropped = logs.size() - keep;
    if (dropped > 0) out += "[... " + std::to_string(dropped) + " earlier entries truncated]\n";
    for (std::size_t i = dropped; i < logs.size(); ++i) out += logs[i] + "\n";
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

namespace {

std::vector<std::pair<std::string, std::string>> record_slots(const std::string& prefix, const CandidateRecord& r) {
    return {{prefix + "_reward", format_real(r.reward, 6)},
            {prefix + "_score", format_real(r.metrics.score, 6)},
            {prefix + "_cost", format_real(r.metrics.cost, 6)},
            {prefix + "_latency", format_real(r.metrics.latency, 6)},
            {prefix + "_document", serialize(r.graph)}};
}

}  // namespace

PromptPair build_prompt(const EvolutionContext& ctx, std::string_view system, std::size_t log_budget_bytes) {
    std::vector<std::pair<std::string, std::string>> slots{
        {"system", std::string(system)},
        {"step", std::to_string(ctx.step)},
        {"total_steps", std::to_string(ctx.total_steps)},
        {"parent_logs", render_logs(ctx.parent->logs, log_budget_bytes)},
    };
    for (auto& s : record_slots("parent", *ctx.parent)) slots.push_back(std::move(s));
    for (auto& s : record_slots("top", *ctx.top)) slots.push_back(std::move(s));

    std::string diverse;
    if (ctx.diverse == ctx.top || ctx.diverse->uid == ctx.top->uid) {
        diverse = "(duplicate of top: this island's archive occupies a single behavior cell)";
    } else {
        const auto& d = *ctx.diverse;
        diverse = "Reward " + format_real(d.reward, 6) + " (correctness " + format_real(d.metrics.score, 6) +
                  ", cost " + format_real(d.metrics.cost, 6) + " USD/query, latency " +
                  format_real(d.metrics.latency, 6) + " s/query)\n\n```json\n" + serialize(d.graph) + "\n```";
    }
    slots.emplace_back("diverse_section", diverse);

    PromptPair p;
    p.context = fill_slots(prompts::k_context_v1, slots);
    if (!p.context.empty() && p.context.back() == '\n') p.context.pop_back();
    p.reflect = fill_slots(prompts::k_reflect_v1, {{"context", p.context}});
    return p;
}

std::string PromptPair::generate(const std::optional<std::string>& reflection) const {
    return fill_slots(prompts::k_generate_v1,
                      {{"context", context},
                       {"reflection", reflection ? *reflection : "(no diagnosis: improve the parent directly)"}});
}

std::string render_repair(std::string_view generate_prompt, std::string_view error) {
    return fill_slots(prompts::k_repair_v1,
                      {{"generate_prompt", std::string(generate_prompt)}, {"error", std::string(error)}});
}

std::optional<std::string> extract_fenced_document(std::string_view completion) {
    const auto open = completion.find("```");
    if (open == std::string_view::npos) return std::nullopt;
    auto body = completion.find('\n', open);
    if (body == std::string_view::npos) return std::nullopt;
    ++body;
    const auto close = completion.find("```", body);
    if (close == std::string_view::npos) return std::nullopt;
    return std::string(completion.substr(body, close - body));
}

// ---------------------------------------------------------------------------

MetaAgent::MetaAgent(Backend& backend, MetaAgentConfig config, RewardWeights weights, const Sandbox* syntax_checker)
    : backend_(backend),
      config_(std::move(config)),
      system_(system_instruction(weights)),
      syntax_checker_(syntax_checker) {}

LlmResponse MetaAgent::call(const std::string& prompt, Purpose purpose, SynthesisResult& acc) const {
    LlmResponse r = backend_.complete({config_.model, prompt, config_.temperature, purpose});
    acc.prompt_tokens += r.prompt_tokens;
    acc.completion_tokens += r.completion_tokens;
    acc.transcript.push_back({purpose, prompt, r.text});
    return r;
}

std::string MetaAgent::reflect(const std::string& prompt, SynthesisResult& acc) const {
    return call(prompt, Purpose::kMetaReflect, acc).text;
}

SynthesisResult MetaAgent::generate(const std::string& prompt, SynthesisResult acc) const {
    std::string current = prompt;
    for (int attempt = 0;; ++attempt) {
        std::string completion;
        try {
            completion = call(current, Purpose::kMetaGenerate, acc).text;
        } catch (const BackendError& e) {
            acc.reason = RejectReason::kBackendFailure;
            acc.detail = e.what();
            return acc;
        }

        std::string parse_error;
        RejectReason reason = RejectReason::kParseFailure;
        if (auto doc = extract_fenced_document(completion)) {
            try {
                WorkflowGraph g = deserialize(*doc);
                ValidationReport report = validate_graph(g);
                if (report.ok() && syntax_checker_) {
                    for (const auto& [id, spec] : g.nodes) {
                        if (const auto* code = std::get_if<CodeNode>(&spec)) {
                            if (auto err = syntax_checker_->syntax_error(code->source)) {
                                report.violations.push_back({ViolationKind::kSyntaxError, id + ": " + *err});
                                break;
                            }
                        }
                    }
                }
                if (!report.ok()) {
                    acc.reason = RejectReason::kValidationFailure;
                    acc.detail = report.summary();
                    return acc;
                }
                acc.candidate = std::move(g);
                acc.reason = RejectReason::kNone;
                acc.detail.clear();
                return acc;
            } catch (const DocumentError& e) {
                parse_error = e.what();
                if (e.kind() == DocumentError::Kind::kSchema) reason = RejectReason::kSchemaViolation;
            }
        } else {
            parse_error = "no fenced ```json block found in the reply";
        }

        if (reason != RejectReason::kParseFailure || attempt >= config_.repair_retries) {
            acc.reason = reason;
            acc.detail = parse_error;
            return acc;
        }
        current = render_repair(prompt, parse_error);
    }
}

SynthesisResult MetaAgent::synthesize(const EvolutionContext& ctx, bool use_reflection) const {
    const PromptPair prompts = build_prompt(ctx, system_, config_.log_budget_bytes);
    SynthesisResult acc;
    std::optional<std::string> reflection;
    if (use_reflection) {
        try {
            reflection = reflect(prompts.reflect, acc);
            acc.reflection = *reflection;
        } catch (const BackendError& e) {
            acc.reason = RejectReason::kBackendFailure;
            acc.detail = e.what();
            return acc;
        }
    }
    return generate(prompts.generate(reflection), std::move(acc));
}

}  // namespace hetflow
