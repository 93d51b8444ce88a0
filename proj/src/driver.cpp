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

#include "hetflow/driver.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hetflow/text.hpp"

namespace hetflow {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string_view kind_name(BackendKind k) {
    switch (k) {
        case BackendKind::kLive: return "live";
        case BackendKind::kReplay: return "replay";
        case BackendKind::kScripted: return "scripted";
    }
    return "live";
}

BackendKind kind_from(const std::string& s) {
    if (s == "live") return BackendKind::kLive;
    if (s == "replay") return BackendKind::kReplay;
    if (s == "scripted") return BackendKind::kScripted;
    throw std::invalid_argument("config: unknown backend kind '" + s + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

BackendConfig backend_from(const json& j, const fs::path& base, const std::string& where) {
    reject_unknown(j, {"kind", "endpoint", "api_key_env", "max_in_flight", "timeout", "fixtures", "script", "record"},
                   where);
    BackendConfig b;
    b.kind = kind_from(j.value("kind", std::string("live")));
    b.live.endpoint = j.value("endpoint", b.live.endpoint);
    b.live.api_key_env = j.value("api_key_env", b.live.api_key_env);
    b.live.max_in_flight = j.value("max_in_flight", b.live.max_in_flight);
    b.live.timeout = j.value("timeout", b.live.timeout);
    b.fixtures = resolve(base, j.value("fixtures", std::string()));
    b.script = resolve(base, j.value("script", std::string()));
    b.record = resolve(base, j.value("record", std::string()));
    return b;
}

json backend_to(const BackendConfig& b) {
    json j{{"kind", kind_name(b.kind)},
           {"endpoint", b.live.endpoint},
           {"api_key_env", b.live.api_key_env},
           {"max_in_flight", b.live.max_in_flight},
           {"timeout", b.live.timeout}};
    if (!b.fixtures.empty()) j["fixtures"] = b.fixtures.string();
    if (!b.script.empty()) j["script"] = b.script.string();
    if (!b.record.empty()) j["record"] = b.record.string();
    return j;
}

}  // namespace

RunConfig RunConfig::reference_preset() { return RunConfig{}; }

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
    reject_unknown(j,
                   {"version", "preset", "islands", "iterations", "migration_interval", "elite_count", "sampler",
                    "reward", "grid", "gate", "task_backend", "meta_backend", "task_model", "task_temperature",
                    "seed_instruction", "meta", "costs", "retry", "parallelism", "sandbox", "timing",
                    "virtual_code_seconds", "seed", "dataset", "output_dir", "checkpoint_every", "ablation"},
                   "config");
    if (j.value("version", kConfigVersion) != kConfigVersion)
        throw std::invalid_argument("config: unsupported version");
    const std::string preset = j.value("preset", std::string("reference"));
    if (preset != "reference") throw std::invalid_argument("config: unknown preset '" + preset + "'");

    RunConfig c = reference_preset();
    c.islands = j.value("islands", c.islands);
    c.iterations = j.value("iterations", c.iterations);
    c.migration_interval = j.value("migration_interval", c.migration_interval);
    c.elite_count = j.value("elite_count", c.elite_count);

    if (j.contains("sampler")) {
        const json& s = j["sampler"];
        reject_unknown(s, {"rho_explore", "rho_exploit"}, "sampler");
        c.sampler.rho_explore = s.value("rho_explore", c.sampler.rho_explore);
        c.sampler.rho_exploit = s.value("rho_exploit", c.sampler.rho_exploit);
    }
    if (j.contains("reward")) {
        const json& r = j["reward"];
        reject_unknown(r, {"lambda_perf", "lambda_cost", "lambda_time", "alpha_cost", "alpha_time"}, "reward");
        c.weights.lambda_perf = r.value("lambda_perf", c.weights.lambda_perf);
        c.weights.lambda_cost = r.value("lambda_cost", c.weights.lambda_cost);
        c.weights.lambda_time = r.value("lambda_time", c.weights.lambda_time);
        c.weights.alpha_cost = r.value("alpha_cost", c.weights.alpha_cost);
        c.weights.alpha_time = r.value("alpha_time", c.weights.alpha_time);
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        reject_unknown(g, {"node_count_edges", "llm_bins"}, "grid");
        c.grid.node_count_edges = g.value("node_count_edges", c.grid.node_count_edges);
        c.grid.llm_bins = g.value("llm_bins", c.grid.llm_bins);
    }
    if (j.contains("gate")) {
        const json& g = j["gate"];
        reject_unknown(g, {"gamma", "mode", "enabled"}, "gate");
        c.split.gamma = g.value("gamma", c.split.gamma);
        const std::string mode = g.value("mode", std::string("fraction_of_best"));
        if (mode == "fraction_of_best") c.split.mode = GammaMode::kFractionOfBest;
        else if (mode == "absolute") c.split.mode = GammaMode::kAbsolute;
        else throw std::invalid_argument("config: unknown gate mode '" + mode + "'");
        c.ablation.disable_gate = !g.value("enabled", true);
    }
    if (j.contains("task_backend")) c.task_backend = backend_from(j["task_backend"], base, "task_backend");
    if (j.contains("meta_backend")) c.meta_backend = backend_from(j["meta_backend"], base, "meta_backend");
    c.task_model = j.value("task_model", c.task_model);
    c.task_temperature = j.value("task_temperature", c.task_temperature);
    c.seed_instruction = j.value("seed_instruction", c.seed_instruction);
    if (j.contains("meta")) {
        const json& m = j["meta"];
        reject_unknown(m, {"model", "temperature", "log_budget_bytes", "repair_retries"}, "meta");
        c.meta.model = m.value("model", c.meta.model);
        c.meta.temperature = m.value("temperature", c.meta.temperature);
        c.meta.log_budget_bytes = m.value("log_budget_bytes", c.meta.log_budget_bytes);
        c.meta.repair_retries = m.value("repair_retries", c.meta.repair_retries);
    }
    if (j.contains("costs")) c.costs = CostTable::from_json(j["costs"]);
    if (j.contains("retry")) {
        const json& r = j["retry"];
        reject_unknown(r, {"max_attempts", "initial_backoff", "multiplier", "max_backoff"}, "retry");
        c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
        c.retry.initial_backoff = r.value("initial_backoff", c.retry.initial_backoff);
        c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
        c.retry.max_backoff = r.value("max_backoff", c.retry.max_backoff);
    }
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("sandbox")) {
        const json& s = j["sandbox"];
        reject_unknown(s, {"wall_time_cap", "memory_cap", "output_cap", "interpreter", "syntax_check", "isolate_network"},
                       "sandbox");
        c.executor.limits.wall_time_cap = s.value("wall_time_cap", c.executor.limits.wall_time_cap);
        c.executor.limits.memory_cap = s.value("memory_cap", c.executor.limits.memory_cap);
        c.executor.limits.output_cap = s.value("output_cap", c.executor.limits.output_cap);
        c.sandbox.interpreter = s.value("interpreter", c.sandbox.interpreter);
        c.sandbox.syntax_check = s.value("syntax_check", c.sandbox.syntax_check);
        c.sandbox.isolate_network = s.value("isolate_network", c.sandbox.isolate_network);
    }
    const std::string timing = j.value("timing", std::string("wall"));
    if (timing == "wall") c.executor.timing = Timing::kWallClock;
    else if (timing == "virtual") c.executor.timing = Timing::kVirtual;
    else throw std::invalid_argument("config: unknown timing '" + timing + "'");
    c.executor.virtual_code_seconds = j.value("virtual_code_seconds", c.executor.virtual_code_seconds);
    c.seed = j.value("seed", c.seed);
    c.dataset = resolve(base, j.value("dataset", std::string()));
    if (j.contains("output_dir")) c.output_dir = resolve(base, j["output_dir"].get<std::string>());
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("ablation")) {
        const json& a = j["ablation"];
        reject_unknown(a, {"disable_reflection", "single_island_greedy", "disable_gate"}, "ablation");
        c.ablation.disable_reflection = a.value("disable_reflection", c.ablation.disable_reflection);
        c.ablation.single_island_greedy = a.value("single_island_greedy", c.ablation.single_island_greedy);
        c.ablation.disable_gate = a.value("disable_gate", c.ablation.disable_gate);
    }
    c.check();
    return c;
}

RunConfig RunConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
    return json{
        {"version", kConfigVersion},
        {"islands", islands},
        {"iterations", iterations},
        {"migration_interval", migration_interval},
        {"elite_count", elite_count},
        {"sampler", {{"rho_explore", sampler.rho_explore}, {"rho_exploit", sampler.rho_exploit}}},
        {"reward",
         {{"lambda_perf", weights.lambda_perf},
          {"lambda_cost", weights.lambda_cost},
          {"lambda_time", weights.lambda_time},
          {"alpha_cost", weights.alpha_cost},
          {"alpha_time", weights.alpha_time}}},
        {"grid", {{"node_count_edges", grid.node_count_edges}, {"llm_bins", grid.llm_bins}}},
        {"gate",
         {{"gamma", split.gamma},
          {"mode", split.mode == GammaMode::kAbsolute ? "absolute" : "fraction_of_best"},
          {"enabled", !ablation.disable_gate}}},
        {"task_backend", backend_to(task_backend)},
        {"meta_backend", backend_to(meta_backend)},
        {"task_model", task_model},
        {"task_temperature", task_temperature},
        {"seed_instruction", seed_instruction},
        {"meta",
         {{"model", meta.model},
          {"temperature", meta.temperature},
          {"log_budget_bytes", meta.log_budget_bytes},
          {"repair_retries", meta.repair_retries}}},
        {"costs", costs.to_json()},
        {"retry",
         {{"max_attempts", retry.max_attempts},
          {"initial_backoff", retry.initial_backoff},
          {"multiplier", retry.multiplier},
          {"max_backoff", retry.max_backoff}}},
        {"parallelism", parallelism},
        {"sandbox",
         {{"wall_time_cap", executor.limits.wall_time_cap},
          {"memory_cap", executor.limits.memory_cap},
          {"output_cap", executor.limits.output_cap},
          {"interpreter", sandbox.interpreter},
          {"syntax_check", sandbox.syntax_check},
          {"isolate_network", sandbox.isolate_network}}},
        {"timing", executor.timing == Timing::kVirtual ? "virtual" : "wall"},
        {"virtual_code_seconds", executor.virtual_code_seconds},
        {"seed", seed},
        {"dataset", dataset.string()},
        {"output_dir", output_dir.string()},
        {"checkpoint_every", checkpoint_every},
        {"ablation",
         {{"disable_reflection", ablation.disable_reflection},
          {"single_island_greedy", ablation.single_island_greedy},
          {"disable_gate", ablation.disable_gate}}},
    };
}

void RunConfig::check() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("config: ") + what);
    };
    require(islands >= 1, "islands must be at least 1");
    require(iterations >= 0, "iterations must be non-negative");
    require(migration_interval >= 1, "migration_interval must be positive");
    require(elite_count >= 1, "elite_count must be positive");
    require(parallelism >= 1, "parallelism must be positive");
    require(checkpoint_every >= 1, "checkpoint_every must be positive");
    require(task_temperature >= 0.0 && task_temperature <= 1.0, "task_temperature must be in [0, 1]");
    require(meta.temperature >= 0.0 && meta.temperature <= 1.0, "meta temperature must be in [0, 1]");
    require(meta.repair_retries >= 0, "repair_retries must be non-negative");
    require(split.gamma >= 0.0, "gamma must be non-negative");
    require(split.mode == GammaMode::kAbsolute || split.gamma <= 1.0, "gamma factor must be in [0, 1]");
    require(retry.max_attempts >= 1, "retry.max_attempts must be positive");
    require(executor.virtual_code_seconds >= 0.0, "virtual_code_seconds must be non-negative");
    require(!sandbox.interpreter.empty(), "sandbox interpreter must not be empty");
    sampler.check();
    weights.check();
    grid.check();
    executor.limits.check();
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

Task task_from_json(const json& j, std::size_t line) {
    const std::string where = "dataset line " + std::to_string(line) + ": ";
    if (!j.is_object()) throw DatasetError(where + "record must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "id" && key != "query" && key != "mode" && key != "gold_answer" && key != "tests")
            throw DatasetError(where + "unknown key '" + key + "'");
    auto str = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) throw DatasetError(where + "'" + key + "' must be a string");
        return j[key].get<std::string>();
    };
    Task t;
    t.id = str("id");
    t.query = str("query");
    const std::string mode = j.contains("mode") ? str("mode") : std::string("math");
    if (t.id.empty() || t.query.empty()) throw DatasetError(where + "id and query must be non-empty");
    if (mode == "math") {
        t.mode = TaskMode::kMath;
        t.gold_answer = str("gold_answer");
        if (j.contains("tests")) throw DatasetError(where + "math records take gold_answer, not tests");
    } else if (mode == "code") {
        t.mode = TaskMode::kCode;
        if (j.contains("gold_answer")) throw DatasetError(where + "code records take tests, not gold_answer");
        if (!j.contains("tests") || !j["tests"].is_array() || j["tests"].empty())
            throw DatasetError(where + "'tests' must be a non-empty array");
        for (const auto& tc : j["tests"]) {
            if (!tc.is_object() || !tc.contains("input") || !tc.contains("expected") || !tc["input"].is_string() ||
                !tc["expected"].is_string())
                throw DatasetError(where + "each test needs string 'input' and 'expected'");
            t.tests.push_back({tc["input"].get<std::string>(), tc["expected"].get<std::string>()});
        }
    } else {
        throw DatasetError(where + "mode must be 'math' or 'code'");
    }
    return t;
}

}  // namespace

std::vector<Task> parse_dataset(std::string_view text) {
    std::vector<Task> tasks;
    std::unordered_map<std::string, std::size_t> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DatasetError("dataset line " + std::to_string(number) + ": " + e.what());
        }
        Task t = task_from_json(j, number);
        if (auto [it, fresh] = seen.emplace(t.id, number); !fresh)
            throw DatasetError("dataset line " + std::to_string(number) + ": duplicate id '" + t.id +
                               "' (first on line " + std::to_string(it->second) + ")");
        tasks.push_back(std::move(t));
    }
    if (tasks.empty()) throw DatasetError("dataset is empty");
    return tasks;
}

std::vector<Task> load_dataset(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

// ---------------------------------------------------------------------------
// Small pieces of the loop

int pick_island(Rng& rng, int islands) {
    if (islands < 1) throw std::invalid_argument("pick_island: no islands");
    return static_cast<int>(rng.index(static_cast<std::size_t>(islands)));
}

WorkflowGraph seed_workflow(const RunConfig& config) {
    WorkflowGraph g;
    g.nodes.emplace("root", LlmNode{config.task_model, config.seed_instruction, config.task_temperature});
    g.terminal = "root";
    return g;
}

// ---------------------------------------------------------------------------
// State (de)serialization

namespace {

json graph_json(const WorkflowGraph& g) { return json::parse(serialize(g)); }

json record_json(const CandidateRecord& r) {
    return json{{"uid", r.uid},
                {"graph", graph_json(r.graph)},
                {"fingerprint", r.fingerprint},
                {"reward", r.reward},
                {"metrics", {{"score", r.metrics.score}, {"cost", r.metrics.cost}, {"latency", r.metrics.latency}}},
                {"logs", r.logs},
                {"lineage",
                 {{"parent_uid", r.lineage.parent_uid},
                  {"parent_fingerprint", r.lineage.parent_fingerprint},
                  {"iteration", r.lineage.iteration}}}};
}

RecordPtr record_from(const json& j) {
    auto r = std::make_shared<CandidateRecord>();
    r->uid = j.at("uid").get<std::uint64_t>();
    r->graph = deserialize(j.at("graph").dump());
    r->fingerprint = j.at("fingerprint").get<std::string>();
    if (r->fingerprint != fingerprint(r->graph))
        throw CheckpointError(CheckpointError::Kind::kCorrupt,
                              "checkpoint: fingerprint mismatch for record " + std::to_string(r->uid));
    r->reward = j.at("reward").get<double>();
    const json& m = j.at("metrics");
    r->metrics = {m.at("score").get<double>(), m.at("cost").get<double>(), m.at("latency").get<double>()};
    r->logs = j.at("logs").get<std::vector<std::string>>();
    r->descriptor = behavior_descriptor(r->graph);
    const json& l = j.at("lineage");
    r->lineage = {l.at("parent_uid").get<std::int64_t>(), l.at("parent_fingerprint").get<std::string>(),
                  l.at("iteration").get<int>()};
    return r;
}

json row_json(const ConvergenceRow& row) {
    json j{{"t", row.t},
           {"island", row.island},
           {"status", row.status},
           {"best_so_far", row.best_so_far},
           {"queries_executed", row.queries_executed},
           {"meta_tokens", row.meta_tokens},
           {"fingerprint", row.fingerprint}};
    j["candidate_reward"] = row.candidate_reward ? json(*row.candidate_reward) : json(nullptr);
    return j;
}

ConvergenceRow row_from(const json& j) {
    ConvergenceRow row;
    row.t = j.at("t").get<int>();
    row.island = j.at("island").get<int>();
    row.status = j.at("status").get<std::string>();
    if (!j.at("candidate_reward").is_null()) row.candidate_reward = j["candidate_reward"].get<double>();
    row.best_so_far = j.at("best_so_far").get<double>();
    row.queries_executed = j.at("queries_executed").get<std::size_t>();
    row.meta_tokens = j.at("meta_tokens").get<std::int64_t>();
    row.fingerprint = j.at("fingerprint").get<std::string>();
    return row;
}

ArchiveOutcome outcome_from(const std::string& s) {
    for (auto o : {ArchiveOutcome::kInserted, ArchiveOutcome::kReplaced, ArchiveOutcome::kRejected})
        if (to_string(o) == s) return o;
    throw std::invalid_argument("unknown archive outcome '" + s + "'");
}

}  // namespace

json state_to_json(const RunState& s) {
    json records = json::array();
    for (const auto& r : s.global_history) records.push_back(record_json(*r));

    json islands = json::array();
    for (const auto& isl : s.islands) {
        json archive = json::array();
        for (const auto& [cell, entry] : isl.archive)
            archive.push_back({{"node_bin", cell.node_bin},
                               {"llm_bin", cell.llm_bin},
                               {"uid", entry.record->uid},
                               {"stamp", entry.stamp}});
        json history = json::array();
        for (const auto& r : isl.history) history.push_back(r->uid);
        islands.push_back({{"id", isl.id}, {"archive", archive}, {"history", history}, {"next_stamp", isl.next_stamp}});
    }

    json rngs = json::object();
    for (const auto& [name, rng] : s.rngs) rngs[name] = rng.state();

    json conv = json::array();
    for (const auto& row : s.convergence) conv.push_back(row_json(row));

    json migrations = json::array();
    for (const auto& ev : s.migrations) {
        json transfers = json::array();
        for (const auto& tr : ev.report.transfers)
            transfers.push_back({{"from", tr.from_island},
                                 {"to", tr.to_island},
                                 {"uid", tr.uid},
                                 {"reward", tr.reward},
                                 {"node_bin", tr.cell.node_bin},
                                 {"llm_bin", tr.cell.llm_bin},
                                 {"outcome", to_string(tr.outcome)}});
        migrations.push_back({{"t", ev.t}, {"transfers", transfers}});
    }

    return json{{"t", s.t},
                {"records", records},
                {"islands", islands},
                {"best", s.best ? json(s.best->uid) : json(nullptr)},
                {"rngs", rngs},
                {"invalid_count", s.invalid_count},
                {"screened_count", s.screened_count},
                {"meta_tokens", s.meta_tokens},
                {"total_queries", s.total_queries},
                {"next_uid", s.next_uid},
                {"dataset_order", s.dataset_order},
                {"convergence", conv},
                {"migrations", migrations}};
}

RunState state_from_json(const json& j) {
    RunState s;
    std::map<std::uint64_t, RecordPtr> by_uid;
    auto lookup = [&](const json& uid) {
        auto it = by_uid.find(uid.get<std::uint64_t>());
        if (it == by_uid.end())
            throw CheckpointError(CheckpointError::Kind::kCorrupt,
                                  "checkpoint: unknown record uid " + std::to_string(uid.get<std::uint64_t>()));
        return it->second;
    };

    s.t = j.at("t").get<int>();
    for (const auto& rj : j.at("records")) {
        RecordPtr r = record_from(rj);
        by_uid[r->uid] = r;
        s.global_history.push_back(r);
    }
    for (const auto& ij : j.at("islands")) {
        IslandState isl;
        isl.id = ij.at("id").get<int>();
        for (const auto& aj : ij.at("archive"))
            isl.archive[Cell{aj.at("node_bin").get<int>(), aj.at("llm_bin").get<int>()}] =
                ArchiveEntry{lookup(aj.at("uid")), aj.at("stamp").get<std::uint64_t>()};
        for (const auto& uid : ij.at("history")) isl.history.push_back(lookup(uid));
        isl.next_stamp = ij.at("next_stamp").get<std::uint64_t>();
        s.islands.push_back(std::move(isl));
    }
    if (!j.at("best").is_null()) s.best = lookup(j["best"]);
    for (const auto& [name, st] : j.at("rngs").items()) {
        Rng rng;
        rng.restore(st.get<std::string>());
        s.rngs.emplace(name, rng);
    }
    s.invalid_count = j.at("invalid_count").get<std::int64_t>();
    s.screened_count = j.at("screened_count").get<std::int64_t>();
    s.meta_tokens = j.at("meta_tokens").get<std::int64_t>();
    s.total_queries = j.at("total_queries").get<std::size_t>();
    s.next_uid = j.at("next_uid").get<std::uint64_t>();
    s.dataset_order = j.at("dataset_order").get<std::vector<std::size_t>>();
    for (const auto& rj : j.at("convergence")) s.convergence.push_back(row_from(rj));
    for (const auto& mj : j.at("migrations")) {
        MigrationEvent ev;
        ev.t = mj.at("t").get<int>();
        for (const auto& tj : mj.at("transfers"))
            ev.report.transfers.push_back(MigrationTransfer{tj.at("from").get<int>(), tj.at("to").get<int>(),
                                                            tj.at("uid").get<std::uint64_t>(),
                                                            tj.at("reward").get<double>(),
                                                            Cell{tj.at("node_bin").get<int>(), tj.at("llm_bin").get<int>()},
                                                            outcome_from(tj.at("outcome").get<std::string>())});
        s.migrations.push_back(std::move(ev));
    }
    return s;
}

void write_checkpoint(const RunState& state, const RunConfig& config, const fs::path& path) {
    const json doc{{"format", "hetflow-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"config", config.to_json()},
                   {"state", state_to_json(state)}};
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: cannot write " + tmp.string());
        out << doc.dump(1) << '\n';
        out.flush();
        if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: rename failed: " + ec.message());
}

LoadedCheckpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CheckpointError(CheckpointError::Kind::kCorrupt, std::string("checkpoint: unreadable: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", std::string()) != "hetflow-checkpoint")
        throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: not a checkpoint document");
    if (!doc.contains("version") || !doc["version"].is_number_integer())
        throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: missing version");
    if (doc["version"].get<int>() != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::kVersionMismatch,
                              "checkpoint: version " + doc["version"].dump() + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    try {
        return {state_from_json(doc.at("state")), doc.at("config")};
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointError::Kind::kCorrupt, std::string("checkpoint: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string real(double v) { return format_real(v, 12); }

}  // namespace

RunReport make_report(const RunState& s) {
    RunReport rep;
    {
        std::ostringstream o;
        o << "t\tisland\tstatus\tcandidate_reward\tbest_so_far\tqueries_executed\tmeta_tokens\tfingerprint\n";
        for (const auto& row : s.convergence)
            o << row.t << '\t' << row.island << '\t' << row.status << '\t'
              << (row.candidate_reward ? real(*row.candidate_reward) : std::string("-")) << '\t'
              << real(row.best_so_far) << '\t' << row.queries_executed << '\t' << row.meta_tokens << '\t'
              << (row.fingerprint.empty() ? std::string("-") : row.fingerprint.substr(0, 16)) << '\n';
        rep.convergence_tsv = o.str();
    }
    {
        std::ostringstream o;
        o << "island\tnode_bin\tllm_bin\tnode_count\tllm_proportion\treward\tuid\tfingerprint\n";
        for (const auto& isl : s.islands)
            for (const auto& [cell, entry] : isl.archive)
                o << isl.id << '\t' << cell.node_bin << '\t' << cell.llm_bin << '\t'
                  << entry.record->descriptor.node_count << '\t' << real(entry.record->descriptor.llm_proportion())
                  << '\t' << real(entry.record->reward) << '\t' << entry.record->uid << '\t'
                  << entry.record->fingerprint.substr(0, 16) << '\n';
        rep.landscape_tsv = o.str();
    }
    {
        std::map<std::uint64_t, RecordPtr> by_uid;
        for (const auto& r : s.global_history) by_uid[r->uid] = r;
        std::ostringstream o;
        o << "depth\tuid\titeration\treward\tnode_count\tllm_proportion\tfingerprint\n";
        int depth = 0;
        for (RecordPtr r = s.best; r;) {
            o << depth++ << '\t' << r->uid << '\t' << r->lineage.iteration << '\t' << real(r->reward) << '\t'
              << r->descriptor.node_count << '\t' << real(r->descriptor.llm_proportion()) << '\t'
              << r->fingerprint.substr(0, 16) << '\n';
            if (r->lineage.parent_uid < 0) break;
            auto it = by_uid.find(static_cast<std::uint64_t>(r->lineage.parent_uid));
            r = it == by_uid.end() ? nullptr : it->second;
        }
        rep.lineage_tsv = o.str();
    }
    {
        json summary{{"iterations_completed", s.t},
                     {"records", s.global_history.size()},
                     {"invalid_candidates", s.invalid_count},
                     {"screened_out", s.screened_count},
                     {"queries_executed", s.total_queries},
                     {"meta_tokens", s.meta_tokens}};
        json migrations = json::array();
        for (const auto& ev : s.migrations) migrations.push_back(ev.t);
        summary["migrations_at"] = migrations;
        if (s.best) {
            summary["best"] = {{"uid", s.best->uid},
                               {"fingerprint", s.best->fingerprint},
                               {"reward", s.best->reward},
                               {"score", s.best->metrics.score},
                               {"cost", s.best->metrics.cost},
                               {"latency", s.best->metrics.latency},
                               {"node_count", s.best->descriptor.node_count},
                               {"llm_count", s.best->descriptor.llm_count},
                               {"workflow", graph_json(s.best->graph)}};
        }
        rep.summary_json = summary.dump(2) + "\n";
    }
    return rep;
}

void RunReport::write(const fs::path& dir) const {
    fs::create_directories(dir);
    auto put = [&](const char* name, const std::string& body) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("report: cannot write " + (dir / name).string());
        out << body;
    };
    put("convergence.tsv", convergence_tsv);
    put("landscape.tsv", landscape_tsv);
    put("lineage.tsv", lineage_tsv);
    put("summary.json", summary_json);
}

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(RunConfig config, std::vector<Task> dataset, Backend& task_backend, Backend& meta_backend)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
    if (config_.ablation.single_island_greedy) config_.islands = 1;
    config_.check();
    if (dataset_.empty()) throw DatasetError("dataset is empty");
    try {
        sandbox_ = std::make_unique<Sandbox>(config_.sandbox);
    } catch (const SandboxUnavailable&) {
        // Workflows without code nodes still run; a code node raises the fault.
        sandbox_.reset();
    }
    executor_ = std::make_unique<Executor>(task_backend, config_.costs, sandbox_.get(), config_.executor);
    meta_ = std::make_unique<MetaAgent>(meta_backend, config_.meta, config_.weights, sandbox_.get());
}

std::vector<Task> Engine::ordered_dataset() const { return ordered_; }

RecordPtr Engine::make_record(const WorkflowGraph& graph, const EvalOutcome& outcome, const Lineage& lineage) {
    auto r = std::make_shared<CandidateRecord>();
    r->uid = state_.next_uid++;
    r->graph = graph;
    r->fingerprint = fingerprint(graph);
    r->reward = *outcome.reward;
    r->metrics = outcome.mean_metrics();
    r->logs = outcome.failure_logs;
    r->descriptor = behavior_descriptor(graph);
    r->lineage = lineage;
    return r;
}

void Engine::initialize() {
    state_ = RunState{};
    for (const char* name : {kRngIsland, kRngParent, kRngPool, kRngShuffle})
        state_.rngs.emplace(name, Rng::substream(config_.seed, name));

    state_.dataset_order.resize(dataset_.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i) state_.dataset_order[i] = i;
    Rng& shuffle = state_.rngs.at(kRngShuffle);
    for (std::size_t i = dataset_.size(); i > 1; --i) std::swap(state_.dataset_order[i - 1], state_.dataset_order[shuffle.index(i)]);
    ordered_.clear();
    for (std::size_t i : state_.dataset_order) ordered_.push_back(dataset_[i]);

    const WorkflowGraph seed = seed_workflow(config_);
    EvalEnvironment env{executor_.get(), config_.weights, config_.parallelism};
    EvalOutcome outcome = cascaded_eval(seed, ordered_, std::nullopt, env);
    if (outcome.status != EvalStatus::kCompleted)
        throw std::runtime_error("seed workflow is invalid: " +
                                 (outcome.logs.empty() ? std::string() : outcome.logs.front()));
    state_.total_queries += outcome.queries_executed;
    RecordPtr rec = make_record(seed, outcome, Lineage{});
    state_.global_history.push_back(rec);
    state_.best = rec;
    for (int k = 0; k < config_.islands; ++k) {
        IslandState isl;
        isl.id = k;
        archive_update(isl, rec, config_.grid);
        state_.islands.push_back(std::move(isl));
    }
    state_.convergence.push_back(ConvergenceRow{0, -1, "seed", rec->reward, rec->reward, outcome.queries_executed, 0,
                                                rec->fingerprint});
}

void Engine::resume(RunState state) {
    if (static_cast<int>(state.islands.size()) != config_.islands)
        throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: island count does not match the config");
    if (state.dataset_order.size() != dataset_.size())
        throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: dataset size does not match");
    for (const char* name : {kRngIsland, kRngParent, kRngPool, kRngShuffle})
        if (!state.rngs.count(name))
            throw CheckpointError(CheckpointError::Kind::kCorrupt, std::string("checkpoint: missing rng ") + name);
    if (!state.best)
        throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: no best record");
    state_ = std::move(state);
    ordered_.clear();
    for (std::size_t i : state_.dataset_order) {
        if (i >= dataset_.size()) throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint: bad dataset order");
        ordered_.push_back(dataset_[i]);
    }
}

IterationRecord Engine::step() {
    if (state_.islands.empty()) throw std::logic_error("engine: step before initialize");
    IterationRecord it;
    const int t = state_.t + 1;
    const int k = pick_island(state_.rngs.at(kRngIsland), config_.islands);
    IslandState& island = state_.islands[static_cast<std::size_t>(k)];

    RecordPtr parent;
    if (config_.ablation.single_island_greedy) {
        parent = state_.best;
    } else {
        parent = sample_parent(island, state_.global_history, config_.sampler, state_.rngs.at(kRngParent),
                               state_.rngs.at(kRngPool))
                     .record;
    }
    const References refs = select_references(island, state_.rngs.at(kRngPool));

    EvolutionContext ctx{parent, refs.top, refs.diverse, t, config_.iterations};
    it.synthesis = meta_->synthesize(ctx, !config_.ablation.disable_reflection);
    state_.meta_tokens += it.synthesis.prompt_tokens + it.synthesis.completion_tokens;

    ConvergenceRow& row = it.row;
    row.t = t;
    row.island = k;
    if (!it.synthesis.ok()) {
        ++state_.invalid_count;
        row.status = "invalid:" + std::string(to_string(it.synthesis.reason));
    } else {
        const WorkflowGraph& candidate = *it.synthesis.candidate;
        row.fingerprint = fingerprint(candidate);
        std::optional<double> gamma;
        if (!config_.ablation.disable_gate) gamma = effective_gamma(config_.split, state_.best->reward);
        EvalEnvironment env{executor_.get(), config_.weights, config_.parallelism};
        it.outcome = cascaded_eval(candidate, ordered_, gamma, env);
        state_.total_queries += it.outcome->queries_executed;
        row.queries_executed = it.outcome->queries_executed;
        row.status = std::string(to_string(it.outcome->status));
        if (it.outcome->status == EvalStatus::kCompleted) {
            RecordPtr rec = make_record(candidate, *it.outcome, Lineage{static_cast<std::int64_t>(parent->uid),
                                                                        parent->fingerprint, t});
            row.candidate_reward = rec->reward;
            state_.global_history.push_back(rec);
            archive_update(island, rec, config_.grid);
            if (rec->reward > state_.best->reward) state_.best = rec;
        } else if (it.outcome->status == EvalStatus::kScreenedOut) {
            ++state_.screened_count;
        } else {
            ++state_.invalid_count;
        }
    }

    state_.t = t;
    if (config_.islands > 1 && migration_due(t, config_.migration_interval)) {
        it.pre_migration = state_.islands;
        MigrationEvent ev{t, ring_migrate(state_.islands, config_.elite_count, config_.grid)};
        state_.migrations.push_back(ev);
        it.migration = std::move(ev);
    }
    row.best_so_far = state_.best->reward;
    row.meta_tokens = state_.meta_tokens;
    state_.convergence.push_back(row);
    return it;
}

void Engine::run(std::optional<int> last, const std::optional<fs::path>& checkpoint_path) {
    const int stop = std::min(last.value_or(config_.iterations), config_.iterations);
    while (state_.t < stop) {
        try {
            step();
        } catch (...) {
            if (checkpoint_path) write_checkpoint(state_, config_, *checkpoint_path);
            throw;
        }
        if (checkpoint_path && (state_.t % config_.checkpoint_every == 0 || state_.t == stop))
            write_checkpoint(state_, config_, *checkpoint_path);
    }
}

// ---------------------------------------------------------------------------
// Backend construction

BackendStack::BackendStack(const BackendConfig& config, const RetryPolicy& retry) {
    switch (config.kind) {
        case BackendKind::kScripted:
            if (config.script.empty()) throw std::invalid_argument("scripted backend needs a script path");
            layers_.push_back(std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(config.script)));
            break;
        case BackendKind::kReplay:
            if (config.fixtures.empty()) throw std::invalid_argument("replay backend needs a fixtures directory");
            layers_.push_back(std::make_unique<ReplayBackend>(config.fixtures));
            break;
        case BackendKind::kLive:
            layers_.push_back(std::make_unique<LiveBackend>(config.live));
            layers_.push_back(std::make_unique<RetryingBackend>(*layers_.back(), retry));
            break;
    }
    if (!config.record.empty()) layers_.push_back(std::make_unique<RecordingBackend>(*layers_.back(), config.record));
}

}  // namespace hetflow
