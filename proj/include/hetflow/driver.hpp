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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetflow/backend.hpp"
#include "hetflow/cascade.hpp"
#include "hetflow/execution.hpp"
#include "hetflow/metaagent.hpp"
#include "hetflow/population.hpp"
#include "hetflow/rng.hpp"
#include "hetflow/sandbox.hpp"
#include "hetflow/scoring.hpp"

namespace hetflow {

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kConfigVersion = 1;

enum class BackendKind { kLive, kReplay, kScripted };

struct BackendConfig {
    BackendKind kind = BackendKind::kLive;
    LiveConfig live;
    std::filesystem::path fixtures;  // replay store
    std::filesystem::path script;    // scripted rules
    std::filesystem::path record;    // optional: also write fixtures here
};

struct AblationSwitches {
    bool disable_reflection = false;
    bool single_island_greedy = false;  // one island, parent is always the best record
    bool disable_gate = false;          // every valid candidate is evaluated on the full dataset
};

struct RunConfig {
    int islands = 2;
    int iterations = 40;
    int migration_interval = 15;
    int elite_count = 2;
    SamplerConfig sampler;
    RewardWeights weights;
    GridConfig grid;
    SplitConfig split;

    BackendConfig task_backend;
    BackendConfig meta_backend;
    std::string task_model = "gpt-4o-mini";
    double task_temperature = 1.0;
    std::string seed_instruction =
        "Solve the following problem. Reply with only the final answer.\n\n{query}";
    MetaAgentConfig meta;
    CostTable costs;
    RetryPolicy retry;
    int parallelism = 4;

    SandboxConfig sandbox;
    ExecutorConfig executor;

    std::uint64_t seed = 0;
    std::filesystem::path dataset;
    std::filesystem::path output_dir = "run";
    int checkpoint_every = 1;
    AblationSwitches ablation;

    /// Defaults: K=2, 40 iterations, migration every 15, rho=(0.3, 0.5),
    /// lambda=(0.9, 0.05, 0.05), alpha_cost=5 per USD, alpha_time=1/60 per s.
    static RunConfig reference_preset();

    /// Reads a config document; relative paths resolve against `base_dir`.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static RunConfig from_file(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Throws std::invalid_argument on any out-of-range value.
    void check() const;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Line-delimited records: {id, query, mode: "math"|"code", gold_answer | tests: [{input, expected}]}.
std::vector<Task> parse_dataset(std::string_view text);
std::vector<Task> load_dataset(const std::filesystem::path& path);

struct ConvergenceRow {
    int t = 0;
    int island = -1;
    std::string status;  // seed, completed, screened_out, invalid:<reason>
    std::optional<double> candidate_reward;
    double best_so_far = 0.0;
    std::size_t queries_executed = 0;
    std::int64_t meta_tokens = 0;  // cumulative
    std::string fingerprint;
};

struct MigrationEvent {
    int t = 0;
    MigrationReport report;
};

struct RunState {
    int t = 0;
    std::vector<IslandState> islands;
    std::vector<RecordPtr> global_history;
    RecordPtr best;
    std::map<std::string, Rng> rngs;
    std::int64_t invalid_count = 0;
    std::int64_t screened_count = 0;
    std::int64_t meta_tokens = 0;
    std::size_t total_queries = 0;
    std::uint64_t next_uid = 0;
    std::vector<std::size_t> dataset_order;
    std::vector<ConvergenceRow> convergence;
    std::vector<MigrationEvent> migrations;
};

/// Names of the RNG substreams.
inline constexpr const char* kRngIsland = "island";
inline constexpr const char* kRngParent = "parent";
inline constexpr const char* kRngPool = "pool";
inline constexpr const char* kRngShuffle = "shuffle";

int pick_island(Rng& rng, int islands);

/// True when migration fires after iteration t.
inline bool migration_due(int t, int interval) { return interval > 0 && t % interval == 0; }

WorkflowGraph seed_workflow(const RunConfig& config);

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { kIo, kCorrupt, kVersionMismatch };
    CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

nlohmann::json state_to_json(const RunState& state);
RunState state_from_json(const nlohmann::json& j);

/// Atomic write (temp file then rename).
void write_checkpoint(const RunState& state, const RunConfig& config, const std::filesystem::path& path);

struct LoadedCheckpoint {
    RunState state;
    nlohmann::json config;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

struct RunReport {
    std::string convergence_tsv;
    std::string landscape_tsv;
    std::string lineage_tsv;
    std::string summary_json;

    void write(const std::filesystem::path& dir) const;
};

RunReport make_report(const RunState& state);

struct IterationRecord {
    ConvergenceRow row;
    SynthesisResult synthesis;
    std::optional<EvalOutcome> outcome;
    std::optional<MigrationEvent> migration;
    std::vector<IslandState> pre_migration;  // island states just before migration, when one ran
};

/// Owns the sandbox, executor and meta-agent for one run; backends are
/// borrowed. Iterations are strictly sequential.
class Engine {
public:
    Engine(RunConfig config, std::vector<Task> dataset, Backend& task_backend, Backend& meta_backend);
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Evaluates the seed without gating and seeds every pool with it.
    void initialize();

    /// Continues from a checkpointed state.
    void resume(RunState state);

    IterationRecord step();

    /// Steps until iteration `last` (default: the configured count). When a
    /// checkpoint path is given the state is saved every `checkpoint_every`
    /// iterations and before an engine fault propagates.
    void run(std::optional<int> last = std::nullopt,
             const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt);

    const RunState& state() const { return state_; }
    const RunConfig& config() const { return config_; }
    bool done() const { return state_.t >= config_.iterations; }

    /// Tasks in the run's shuffled order.
    std::vector<Task> ordered_dataset() const;

private:
    RecordPtr make_record(const WorkflowGraph& graph, const EvalOutcome& outcome, const Lineage& lineage);

    RunConfig config_;
    std::vector<Task> dataset_;
    std::unique_ptr<Sandbox> sandbox_;
    std::unique_ptr<Executor> executor_;
    std::unique_ptr<MetaAgent> meta_;
    RunState state_;
    std::vector<Task> ordered_;
};

/// Backends built from configuration, with retries around the live client.
class BackendStack {
public:
    explicit BackendStack(const BackendConfig& config, const RetryPolicy& retry);
    Backend& top() { return *layers_.back(); }

private:
    std::vector<std::unique_ptr<Backend>> layers_;
};

}  // namespace hetflow
