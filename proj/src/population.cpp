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

#include "hetflow/population.hpp"

#include <algorithm>
#include <stdexcept>

namespace hetflow {

std::string_view to_string(ArchiveOutcome outcome) {
    switch (outcome) {
        case ArchiveOutcome::kInserted: return "inserted";
        case ArchiveOutcome::kReplaced: return "replaced";
        case ArchiveOutcome::kRejected: return "rejected";
    }
    return "unknown";
}

std::string_view to_string(ParentPool pool) {
    switch (pool) {
        case ParentPool::kIslandHistory: return "island-history";
        case ParentPool::kIslandArchive: return "island-archive";
        case ParentPool::kGlobalHistory: return "global-history";
    }
    return "unknown";
}

void GridConfig::check() const {
    if (node_count_edges.empty() || llm_bins < 1) throw std::invalid_argument("GridConfig: empty axis");
    for (std::size_t i = 1; i < node_count_edges.size(); ++i)
        if (node_count_edges[i] <= node_count_edges[i - 1])
            throw std::invalid_argument("GridConfig: node_count_edges must be strictly increasing");
}

Cell GridConfig::cell_of(const BehaviorDescriptor& d) const {
    Cell c;
    auto it = std::upper_bound(node_count_edges.begin(), node_count_edges.end(), d.node_count);
    c.node_bin = std::max(0, static_cast<int>(it - node_count_edges.begin()) - 1);
    if (d.node_count > 0) {
        // Integer arithmetic keeps exact proportions like 3/5 in the right bin.
        c.llm_bin = std::min(llm_bins - 1, d.llm_count * llm_bins / d.node_count);
    }
    return c;
}

ArchiveOutcome archive_update(IslandState& island, const RecordPtr& record, const GridConfig& grid) {
    island.history.push_back(record);
    const Cell cell = grid.cell_of(record->descriptor);
    auto it = island.archive.find(cell);
    if (it == island.archive.end()) {
        island.archive.emplace(cell, ArchiveEntry{record, island.next_stamp++});
        return ArchiveOutcome::kInserted;
    }
    if (record->reward > it->second.record->reward) {
        it->second = ArchiveEntry{record, island.next_stamp++};
        return ArchiveOutcome::kReplaced;
    }
    return ArchiveOutcome::kRejected;
}

void SamplerConfig::check() const {
    if (!(rho_explore >= 0) || !(rho_exploit >= 0) || rho_explore + rho_exploit > 1.0)
        throw std::invalid_argument("SamplerConfig: ratios must be non-negative and sum to at most 1");
}

ParentPool choose_pool(double r, const SamplerConfig& s) {
    if (r < s.rho_explore) return ParentPool::kIslandHistory;
    if (r < s.rho_explore + s.rho_exploit) return ParentPool::kIslandArchive;
    return ParentPool::kGlobalHistory;
}

ParentDraw sample_parent(const IslandState& island, std::span<const RecordPtr> global_history,
                         const SamplerConfig& sampler, Rng& branch, Rng& pool_rng) {
    const ParentPool pool = choose_pool(branch.uniform(), sampler);
    switch (pool) {
        case ParentPool::kIslandHistory:
            if (island.history.empty()) throw std::logic_error("sample_parent: empty island history");
            return {island.history[pool_rng.index(island.history.size())], pool};
        case ParentPool::kIslandArchive: {
            if (island.archive.empty()) throw std::logic_error("sample_parent: empty archive");
            auto it = island.archive.begin();
            std::advance(it, static_cast<std::ptrdiff_t>(pool_rng.index(island.archive.size())));
            return {it->second.record, pool};
        }
        case ParentPool::kGlobalHistory:
            if (global_history.empty()) throw std::logic_error("sample_parent: empty global history");
            return {global_history[pool_rng.index(global_history.size())], pool};
    }
    throw std::logic_error("sample_parent: unreachable");
}

namespace {

bool ranks_before(const ArchiveEntry& a, const ArchiveEntry& b) {
    if (a.record->reward != b.record->reward) return a.record->reward > b.record->reward;
    return a.stamp < b.stamp;
}

}  // namespace

References select_references(const IslandState& island, Rng& rng) {
    if (island.archive.empty()) throw std::logic_error("select_references: empty archive");
    auto top = island.archive.begin();
    for (auto it = island.archive.begin(); it != island.archive.end(); ++it)
        if (ranks_before(it->second, top->second)) top = it;

    std::vector<std::map<Cell, ArchiveEntry>::const_iterator> others;
    for (auto it = island.archive.begin(); it != island.archive.end(); ++it)
        if (it != top) others.push_back(it);

    References refs{top->second.record, top->second.record, top->first, top->first};
    if (!others.empty()) {
        auto pick = others[rng.index(others.size())];
        refs.diverse = pick->second.record;
        refs.diverse_cell = pick->first;
    }
    return refs;
}

std::vector<RecordPtr> ranked_elites(const IslandState& island) {
    std::vector<const ArchiveEntry*> entries;
    for (const auto& [cell, entry] : island.archive) entries.push_back(&entry);
    std::sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) { return ranks_before(*a, *b); });
    std::vector<RecordPtr> out;
    for (const auto* e : entries) out.push_back(e->record);
    return out;
}

MigrationReport ring_migrate(std::vector<IslandState>& islands, int elite_count, const GridConfig& grid) {
    MigrationReport report;
    const std::size_t k = islands.size();
    if (k < 2 || elite_count <= 0) return report;

    std::vector<std::vector<RecordPtr>> snapshot(k);
    for (std::size_t i = 0; i < k; ++i) {
        auto ranked = ranked_elites(islands[i]);
        if (ranked.size() > static_cast<std::size_t>(elite_count)) ranked.resize(static_cast<std::size_t>(elite_count));
        snapshot[i] = std::move(ranked);
    }
    for (std::size_t i = 0; i < k; ++i) {
        IslandState& dest = islands[(i + 1) % k];
        for (const auto& rec : snapshot[i]) {
            MigrationTransfer t;
            t.from_island = islands[i].id;
            t.to_island = dest.id;
            t.uid = rec->uid;
            t.reward = rec->reward;
            t.cell = grid.cell_of(rec->descriptor);
            t.outcome = archive_update(dest, rec, grid);
            report.transfers.push_back(t);
        }
    }
    return report;
}

RecordPtr best_overall(std::span<const RecordPtr> pool) {
    RecordPtr best;
    for (const auto& r : pool)
        if (!best || r->reward > best->reward) best = r;
    return best;
}

}  // namespace hetflow
