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

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hetflow/rng.hpp"
#include "hetflow/workflow.hpp"

namespace hetflow {

struct MetricsSummary {
    double score = 0.0;
    double cost = 0.0;
    double latency = 0.0;

    friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

struct Lineage {
    std::int64_t parent_uid = -1;  // -1 for the seed
    std::string parent_fingerprint;
    int iteration = 0;  // 0 for the seed

    friend bool operator==(const Lineage&, const Lineage&) = default;
};

/// An evaluated, valid workflow. Immutable once built; islands share records
/// by pointer, and migration copies the pointer.
struct CandidateRecord {
    std::uint64_t uid = 0;
    WorkflowGraph graph;
    std::string fingerprint;
    double reward = 0.0;
    MetricsSummary metrics;
    std::vector<std::string> logs;
    BehaviorDescriptor descriptor;
    Lineage lineage;

    friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

using RecordPtr = std::shared_ptr<const CandidateRecord>;

struct Cell {
    int node_bin = 0;
    int llm_bin = 0;

    friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Behavior grid. Node-count bin i covers [node_count_edges[i], node_count_edges[i+1]),
/// the last bin is open-ended. LLM proportion is split into llm_bins equal bins
/// over [0, 1] with 1.0 falling in the last one.
struct GridConfig {
    std::vector<int> node_count_edges{1, 2, 3, 4, 6, 9};
    int llm_bins = 5;

    /// Throws std::invalid_argument for an empty axis or non-increasing edges.
    void check() const;
    Cell cell_of(const BehaviorDescriptor& d) const;
};

struct ArchiveEntry {
    RecordPtr record;
    std::uint64_t stamp = 0;  // insertion order within the island, for tie-breaking
};

struct IslandState {
    int id = 0;
    std::map<Cell, ArchiveEntry> archive;
    std::vector<RecordPtr> history;
    std::uint64_t next_stamp = 0;
};

enum class ArchiveOutcome { kInserted, kReplaced, kRejected };

std::string_view to_string(ArchiveOutcome outcome);

/// Elite replacement with strict improvement; an empty cell counts as -inf.
/// The record is appended to the island history whatever the outcome.
ArchiveOutcome archive_update(IslandState& island, const RecordPtr& record, const GridConfig& grid);

struct SamplerConfig {
    double rho_explore = 0.3;
    double rho_exploit = 0.5;

    void check() const;
};

enum class ParentPool { kIslandHistory, kIslandArchive, kGlobalHistory };

std::string_view to_string(ParentPool pool);

/// Branch for a draw r in [0, 1): r < rho_explore -> island history,
/// r < rho_explore + rho_exploit -> island archive, else global history.
ParentPool choose_pool(double r, const SamplerConfig& sampler);

struct ParentDraw {
    RecordPtr record;
    ParentPool pool;
};

/// `branch` decides the pool, `pool_rng` picks uniformly within it.
ParentDraw sample_parent(const IslandState& island, std::span<const RecordPtr> global_history,
                         const SamplerConfig& sampler, Rng& branch, Rng& pool_rng);

struct References {
    RecordPtr top;
    RecordPtr diverse;
    Cell top_cell;
    Cell diverse_cell;

    bool degenerate() const { return top == diverse; }
};

/// top: highest reward in the archive (earliest insertion wins ties).
/// diverse: uniform over records in other occupied cells, or top when the
/// archive occupies a single cell.
References select_references(const IslandState& island, Rng& rng);

/// Archive records ordered by reward descending, insertion order ascending.
std::vector<RecordPtr> ranked_elites(const IslandState& island);

struct MigrationTransfer {
    int from_island = 0;
    int to_island = 0;
    std::uint64_t uid = 0;
    double reward = 0.0;
    Cell cell;
    ArchiveOutcome outcome = ArchiveOutcome::kRejected;
};

struct MigrationReport {
    std::vector<MigrationTransfer> transfers;
};

/// Island k sends copies of its top `elite_count` elites, taken from a
/// snapshot before any transfer, to island (k+1) mod K through
/// archive_update. No-op for fewer than two islands.
MigrationReport ring_migrate(std::vector<IslandState>& islands, int elite_count, const GridConfig& grid);

/// Highest-reward record, earliest on ties. Null for an empty pool.
RecordPtr best_overall(std::span<const RecordPtr> pool);

}  // namespace hetflow
