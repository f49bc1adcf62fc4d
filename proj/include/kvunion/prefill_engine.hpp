// SPDX-License-Identifier: Apache-2.0
//
// Chunked prefill driver: per chunk append K/V, search a block pattern,
// lower it to group tables and execute against the accumulated cache.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kvunion/attention.hpp"
#include "kvunion/block_union.hpp"
#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/paged_kv_cache.hpp"
#include "kvunion/pattern_search.hpp"
#include "kvunion/sparse_exec.hpp"
#include "kvunion/workload.hpp"

namespace kvunion {

enum class UnionMode { kv_group, sub_kv_group, per_head };
enum class SelectorKind { block_union, quoka };

struct EngineConfig {
    std::size_t chunk_size = 1024;
    std::size_t block_size = 64;
    ScorerConfig scorer;
    UnionMode union_mode = UnionMode::kv_group;
    std::size_t subgroup_size = 4;
    Backend backend = Backend::zero_copy_paged;
    SelectorKind selector = SelectorKind::block_union;
    std::size_t quoka_stride = 8;
    double quoka_budget = 0.25;
    /// Compare every chunk against the dense oracle.
    bool track_error = true;
    /// Keep per-chunk masks and tables in the result.
    bool keep_artifacts = false;
    double tile_fixed_cost = 0.0;
    std::size_t workers = 1;

    void validate() const {
        KVUNION_CHECK(chunk_size >= 1, ConfigError, "engine: chunk_size must be >= 1");
        KVUNION_CHECK(block_size >= 1, ConfigError, "engine: block_size must be >= 1");
        KVUNION_CHECK(subgroup_size >= 1, ConfigError, "engine: subgroup_size must be >= 1");
        KVUNION_CHECK(quoka_stride >= 1, ConfigError, "engine: quoka stride must be >= 1");
        KVUNION_CHECK(quoka_budget > 0.0 && quoka_budget <= 1.0, ConfigError, "engine: quoka budget must lie in (0, 1]");
        KVUNION_CHECK(tile_fixed_cost >= 0.0, ConfigError, "engine: tile_fixed_cost must be >= 0");
        ScorerConfig s = scorer;
        s.block_size = block_size;
        s.validate();
    }

    /// Execution grouping implied by the union mode.
    GQAConfig gqa(std::size_t q_heads, std::size_t kv_heads) const {
        const std::size_t ratio = q_heads / kv_heads;
        switch (union_mode) {
            case UnionMode::kv_group: return GQAConfig::make(q_heads, kv_heads, ratio);
            case UnionMode::sub_kv_group:
                return GQAConfig::make(q_heads, kv_heads, effective_subgroup_size(subgroup_size, ratio));
            case UnionMode::per_head: return GQAConfig::make(q_heads, kv_heads, 1);
        }
        throw ConfigError("engine: unknown union mode");
    }
};

struct ChunkRecord {
    std::size_t chunk_index = 0;
    std::size_t prefix_len = 0;
    std::size_t chunk_len = 0;
    SparsityReport sparsity;
    CostCounters cost;
    /// Max-abs output difference against dense attention; 0 when not tracked.
    double max_abs_error = 0.0;
    /// KV tokens selected per execution row (table rows, or kv-head rows for
    /// token selection).
    double mean_row_tokens = 0.0;
    std::size_t max_row_tokens = 0;
};

struct PrefillTrace {
    WorkloadConfig workload;
    std::vector<ChunkRecord> chunks;
    CostCounters totals;
    double max_abs_error = 0.0;
};

struct PrefillResult {
    TensorF32 outputs;  // [B, H_q, L, D]
    PrefillTrace trace;
    std::vector<BlockMask> masks;
    std::vector<KVBlockTable> tables;
};

/// Single dense causal pass over the whole sequence.
inline TensorF32 run_one_shot_dense(const Workload& w, std::size_t workers = 1) {
    CausalLayout layout{0, w.length(), 1};
    return dense_attention_heads(w.q, w.k, w.v, layout, workers);
}

/// Slot-weighted mean of per-chunk sparsity reports.
inline SparsityReport aggregate_sparsity(const std::vector<ChunkRecord>& chunks) {
    double pre = 0, qu = 0, su = 0, gu = 0;
    std::size_t total = 0;
    for (const auto& c : chunks) {
        const double n = static_cast<double>(c.sparsity.counted_slots);
        pre += n * c.sparsity.pre_union;
        qu += n * c.sparsity.q_union;
        su += n * c.sparsity.subgroup_union;
        gu += n * c.sparsity.group_union;
        total += c.sparsity.counted_slots;
    }
    if (total == 0) return {};
    const double t = static_cast<double>(total);
    return {pre / t, qu / t, su / t, gu / t, total};
}

namespace detail {

inline void write_chunk_output(TensorF32& outputs, const TensorF32& chunk_out, std::size_t start) {
    for (std::size_t b = 0; b < chunk_out.dim(0); ++b)
        for (std::size_t h = 0; h < chunk_out.dim(1); ++h)
            for (std::size_t p = 0; p < chunk_out.dim(2); ++p) {
                auto src = chunk_out.row({b, h, p});
                std::copy(src.begin(), src.end(), outputs.row({b, h, start + p}).begin());
            }
}

inline double max_abs_rows(const TensorF32& chunk_out, const TensorF32& reference, std::size_t start) {
    float m = 0.0f;
    for (std::size_t b = 0; b < chunk_out.dim(0); ++b)
        for (std::size_t h = 0; h < chunk_out.dim(1); ++h)
            for (std::size_t p = 0; p < chunk_out.dim(2); ++p) {
                auto x = chunk_out.row({b, h, p});
                auto y = reference.row({b, h, start + p});
                for (std::size_t n = 0; n < x.size(); ++n) m = std::max(m, std::fabs(x[n] - y[n]));
            }
    return m;
}

/// Token-level sparsity of a selection over prefix tokens, repeated for every stage.
inline SparsityReport token_sparsity(const TokenSelection& sel, const CausalLayout& layout, std::size_t q_heads) {
    if (layout.prefix_len == 0) return {};
    std::size_t kept = 0;
    for (const auto& r : sel.rows) kept += r.size() - layout.chunk_len;
    const double s = 1.0 - static_cast<double>(kept) / static_cast<double>(sel.rows.size() * layout.prefix_len);
    return {s, s, s, s, layout.prefix_len * layout.chunk_len * q_heads * sel.batch};
}

}  // namespace detail

/// Runs the chunked prefill pipeline over a full-sequence workload.
inline PrefillResult run_chunked_prefill(const Workload& w, const EngineConfig& cfg) {
    cfg.validate();
    ScorerConfig scorer = cfg.scorer;
    scorer.block_size = cfg.block_size;
    const std::size_t total = w.length(), d = w.head_dim();
    const GQAConfig gqa = cfg.gqa(w.q_heads(), w.kv_heads());
    const GQAConfig stats_gqa = GQAConfig::make(w.q_heads(), w.kv_heads());

    std::optional<TensorF32> reference;
    if (cfg.track_error) reference = run_one_shot_dense(w, cfg.workers);

    PrefillResult result{TensorF32(w.q.shape()), PrefillTrace{w.params, {}, {}, 0.0}, {}, {}};
    PagedKVCache cache(w.batch(), w.kv_heads(), d, cfg.block_size);
    CostLedger ledger;

    for (std::size_t start = 0, index = 0; start < total; start += cfg.chunk_size, ++index) {
        const std::size_t len = std::min(cfg.chunk_size, total - start);
        const CausalLayout layout{start, len, cfg.block_size};
        const CostCounters before = ledger.snapshot();
        cache.append_chunk(slice_seq(w.k, start, len), slice_seq(w.v, start, len));
        const TensorF32 q_chunk = slice_seq(w.q, start, len);

        ChunkRecord rec;
        rec.chunk_index = index;
        rec.prefix_len = start;
        rec.chunk_len = len;
        TensorF32 out;
        try {
            if (cfg.selector == SelectorKind::quoka) {
                const TokenSelection sel = quoka_select(q_chunk, cache, layout, cfg.quoka_stride, cfg.quoka_budget, ledger);
                out = exec_token_gather(q_chunk, cache, sel, layout, ledger, cfg.workers);
                rec.sparsity = detail::token_sparsity(sel, layout, w.q_heads());
                for (const auto& r : sel.rows) rec.max_row_tokens = std::max(rec.max_row_tokens, r.size());
                rec.mean_row_tokens = static_cast<double>(sel.total_tokens()) / static_cast<double>(sel.rows.size());
            } else {
                const BlockMask mask = search_pattern(q_chunk, cache, layout, scorer, ledger, cfg.workers);
                if (!mask.chunk_open(layout)) {
                    throw OpenChunkViolation("engine: emitted mask leaves current-chunk blocks closed");
                }
                rec.sparsity = sparsity_stats(mask, stats_gqa, layout, cfg.subgroup_size);
                ExecPlan plan{lower_mask(mask, gqa, layout, &ledger), layout, gqa, cfg.backend};
                out = execute(q_chunk, cache, plan, mask, ledger, cfg.workers);
                std::size_t row_tokens_sum = 0;
                for (std::size_t r = 0; r < plan.table.n_rows(); ++r) {
                    std::size_t n = 0;
                    for (auto j : plan.table.row(r)) {
                        auto [t0, t1] = layout.kvblock_range(j);
                        n += t1 - t0;
                    }
                    row_tokens_sum += n;
                    rec.max_row_tokens = std::max(rec.max_row_tokens, n);
                }
                rec.mean_row_tokens = static_cast<double>(row_tokens_sum) / static_cast<double>(plan.table.n_rows());
                if (cfg.keep_artifacts) {
                    result.masks.push_back(mask);
                    result.tables.push_back(plan.table);
                }
            }
        } catch (const OpenChunkViolation& e) {
            throw OpenChunkViolation(std::string(e.what()) + " (chunk " + std::to_string(index) + ")",
                                     static_cast<std::ptrdiff_t>(index));
        }
        detail::write_chunk_output(result.outputs, out, start);
        if (reference) {
            rec.max_abs_error = detail::max_abs_rows(out, *reference, start);
            result.trace.max_abs_error = std::max(result.trace.max_abs_error, rec.max_abs_error);
        }
        rec.cost = ledger.snapshot() - before;
        result.trace.chunks.push_back(rec);
    }
    result.trace.totals = ledger.snapshot();
    return result;
}

struct FrontierRow {
    std::string label;
    double max_abs_error = 0.0;
    double ideal_speedup = 1.0;
    SparsityReport sparsity;
    std::uint64_t kv_bytes_copied = 0;
    std::uint64_t metadata_bytes_built = 0;
    std::uint64_t attn_flops = 0;
    std::uint64_t score_flops = 0;
    double mean_row_tokens = 0.0;
};

inline FrontierRow frontier_row(const std::string& label, const PrefillTrace& trace, double tile_fixed_cost = 0.0) {
    const CostSummary cs = cost_summary(trace.totals, tile_fixed_cost);
    double tokens = 0.0;
    for (const auto& c : trace.chunks) tokens += c.mean_row_tokens;
    return {label,
            trace.max_abs_error,
            cs.ideal_speedup,
            aggregate_sparsity(trace.chunks),
            trace.totals.kv_bytes_copied,
            trace.totals.metadata_bytes_built,
            trace.totals.attn_flops,
            trace.totals.score_flops,
            trace.chunks.empty() ? 0.0 : tokens / static_cast<double>(trace.chunks.size())};
}

struct SelectorComparison {
    std::vector<PrefillTrace> traces;
    std::vector<FrontierRow> frontier;
};

/// Runs every config over the same token stream.
inline SelectorComparison compare_selectors(const Workload& w, const std::vector<std::pair<std::string, EngineConfig>>& configs) {
    SelectorComparison cmp;
    for (const auto& [label, cfg] : configs) {
        EngineConfig c = cfg;
        c.track_error = true;
        auto res = run_chunked_prefill(w, c);
        cmp.frontier.push_back(frontier_row(label, res.trace, c.tile_fixed_cost));
        cmp.traces.push_back(std::move(res.trace));
    }
    return cmp;
}

}  // namespace kvunion
