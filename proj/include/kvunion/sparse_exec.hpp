// SPDX-License-Identifier: Apache-2.0
//
// Executors over a selected KV subset. All of them hand attend_row the
// selected tokens in table order with causal filtering done on absolute
// positions, so zero-copy and copy-compact produce bit-identical outputs.
//
// FLOP convention: each attended (query, token) pair costs 4 * D (QK and PV,
// multiply-add counted as 2); softmax is free. dense_attn_flops accumulates
// what full causal attention would cost for the same queries.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kvunion/attention.hpp"
#include "kvunion/block_table.hpp"
#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/paged_kv_cache.hpp"
#include "kvunion/parallel.hpp"
#include "kvunion/pattern_search.hpp"

namespace kvunion {

enum class Backend { zero_copy_paged, copy_compact, block_sparse_tiles };

struct ExecPlan {
    KVBlockTable table;
    CausalLayout layout;
    GQAConfig cfg;
    Backend backend = Backend::zero_copy_paged;
};

namespace detail {

inline std::uint64_t pair_flops(std::size_t d, std::size_t pairs) { return 4ull * d * pairs; }

inline std::uint64_t dense_flops_for_chunk(const CausalLayout& layout, std::size_t d) {
    std::uint64_t pairs = 0;
    for (std::size_t p = 0; p < layout.chunk_len; ++p) pairs += layout.kv_limit(p) + 1;
    return pair_flops(d, pairs);
}

inline void check_exec_inputs(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout,
                              const GQAConfig& cfg) {
    detail::check_chunk_inputs(q, cache, layout);
    cfg.validate();
    KVUNION_CHECK(q.dim(1) == cfg.num_q_heads && cache.kv_heads() == cfg.num_kv_heads, ShapeError,
                  "exec: head counts do not match GQA config");
}

/// Token lists of one selection row: K/V row pointers plus absolute positions.
struct RowTokens {
    std::vector<const float*> k;
    std::vector<const float*> v;
    std::vector<std::uint32_t> pos;
};

/// Attends every query of head h over the row's tokens visible to it.
/// Returns the number of attended pairs.
inline std::uint64_t attend_head(const TensorF32& q, std::size_t b, std::size_t h, const CausalLayout& layout,
                                 std::size_t p_begin, std::size_t p_end, const RowTokens& row, TensorF32& out) {
    const std::size_t d = q.dim(3);
    std::vector<const float*> k_sel, v_sel;
    k_sel.reserve(row.k.size());
    v_sel.reserve(row.v.size());
    std::vector<float> scratch;
    std::uint64_t pairs = 0;
    for (std::size_t p = p_begin; p < p_end; ++p) {
        const std::size_t limit = layout.kv_limit(p);
        k_sel.clear();
        v_sel.clear();
        for (std::size_t n = 0; n < row.pos.size(); ++n) {
            if (row.pos[n] <= limit) {
                k_sel.push_back(row.k[n]);
                v_sel.push_back(row.v[n]);
            }
        }
        if (k_sel.empty()) {
            throw DegenerateRowError("exec: query " + std::to_string(p) + " of head " + std::to_string(h) +
                                     " has no visible selected token");
        }
        attend_row(q.row({b, h, p}).data(), k_sel, v_sel, d, out.row({b, h, p}).data(), scratch);
        pairs += k_sel.size();
    }
    return pairs;
}

inline void check_table(const KVBlockTable& table, const TensorF32& q, const CausalLayout& layout, const GQAConfig& cfg) {
    KVUNION_CHECK(table.batch() == q.dim(0) && table.n_groups() == cfg.n_groups(), ShapeError,
                  "exec: table batch/group dims do not match");
    KVUNION_CHECK(table.n_kvblocks() == layout.n_kvblocks(), ShapeError, "exec: table built over a different block grid");
}

}  // namespace detail

/// Paged execution: every pseudo-row's page list is resolved to views into
/// the cache; no K/V payload is copied.
inline TensorF32 exec_zero_copy(const TensorF32& q, const PagedKVCache& cache, const ExecPlan& plan, CostLedger& ledger,
                                std::size_t workers = 1) {
    const KVBlockTable& table = plan.table;
    const CausalLayout& layout = plan.layout;
    const GQAConfig& cfg = plan.cfg;
    detail::check_exec_inputs(q, cache, layout, cfg);
    detail::check_table(table, q, layout, cfg);
    TensorF32 out(q.shape());
    const std::size_t d = q.dim(3);
    parallel_for(table.n_rows(), workers, [&](std::size_t r) {
        const std::size_t b = r / table.n_groups(), g = r % table.n_groups(), kvh = cfg.kv_head_of_group(g);
        const auto blocks = table.row(r);
        if (blocks.empty()) {
            throw OpenChunkViolation("exec_zero_copy: empty page list for row " + std::to_string(r));
        }
        detail::RowTokens row;
        for (auto j : blocks) {
            const PageView page = cache.page_view(b, kvh, j);
            for (std::size_t t = 0; t < page.valid_len; ++t) {
                row.k.push_back(page.k_token(t));
                row.v.push_back(page.v_token(t));
                row.pos.push_back(static_cast<std::uint32_t>(page.first_pos + t));
            }
        }
        auto [h0, h1] = cfg.group_heads(g);
        std::uint64_t pairs = 0;
        for (std::size_t h = h0; h < h1; ++h) pairs += detail::attend_head(q, b, h, layout, 0, layout.chunk_len, row, out);
        ledger.add_attn_flops(detail::pair_flops(d, pairs));
        ledger.add_dense_attn_flops((h1 - h0) * detail::dense_flops_for_chunk(layout, d));
    });
    return out;
}

/// Copy-then-dense execution: each pseudo-row's pages are gathered into a
/// compact buffer; causal masking goes through the compact -> absolute
/// position remap, whose entries count as metadata.
inline TensorF32 exec_copy_compact(const TensorF32& q, const PagedKVCache& cache, const ExecPlan& plan,
                                   CostLedger& ledger, std::size_t workers = 1) {
    const KVBlockTable& table = plan.table;
    const CausalLayout& layout = plan.layout;
    const GQAConfig& cfg = plan.cfg;
    detail::check_exec_inputs(q, cache, layout, cfg);
    detail::check_table(table, q, layout, cfg);
    TensorF32 out(q.shape());
    const std::size_t d = q.dim(3);
    parallel_for(table.n_rows(), workers, [&](std::size_t r) {
        const std::size_t b = r / table.n_groups(), g = r % table.n_groups(), kvh = cfg.kv_head_of_group(g);
        const auto blocks = table.row(r);
        if (blocks.empty()) {
            throw OpenChunkViolation("exec_copy_compact: empty page list for row " + std::to_string(r));
        }
        const GatheredKV compact = gather_blocks(cache, b, kvh, blocks, ledger);
        ledger.add_metadata_bytes(kIndexBytes * compact.positions.size());
        detail::RowTokens row;
        row.pos = compact.positions;
        for (std::size_t n = 0; n < compact.positions.size(); ++n) {
            row.k.push_back(compact.k.row({n}).data());
            row.v.push_back(compact.v.row({n}).data());
        }
        auto [h0, h1] = cfg.group_heads(g);
        std::uint64_t pairs = 0;
        for (std::size_t h = h0; h < h1; ++h) pairs += detail::attend_head(q, b, h, layout, 0, layout.chunk_len, row, out);
        ledger.add_attn_flops(detail::pair_flops(d, pairs));
        ledger.add_dense_attn_flops((h1 - h0) * detail::dense_flops_for_chunk(layout, d));
    });
    return out;
}

/// Tile-sparse execution straight from the per-(head, q-block) mask: each
/// (b, h, i) attends over the tokens of its own selected kv blocks.
inline TensorF32 exec_block_sparse(const TensorF32& q, const PagedKVCache& cache, const BlockMask& mask,
                                   const CausalLayout& layout, CostLedger& ledger, std::size_t workers = 1) {
    detail::check_chunk_inputs(q, cache, layout);
    KVUNION_CHECK(mask.batch() == q.dim(0) && mask.heads() == q.dim(1) && mask.matches_layout(layout), ShapeError,
                  "exec_block_sparse: mask dims do not match inputs");
    KVUNION_CHECK(mask.is_causal_consistent(layout), ValidationError, "exec_block_sparse: mask selects non-causal tiles");
    TensorF32 out(q.shape());
    const std::size_t hq = q.dim(1), d = q.dim(3), ratio = hq / cache.kv_heads();
    parallel_for(q.dim(0) * hq, workers, [&](std::size_t bh) {
        const std::size_t b = bh / hq, h = bh % hq, kvh = h / ratio;
        std::uint64_t pairs = 0, tiles = 0;
        for (std::size_t i = 0; i < mask.n_qblocks(); ++i) {
            detail::RowTokens row;
            for (std::size_t j = 0; j < mask.n_kvblocks(); ++j) {
                if (!mask.get(b, h, i, j)) continue;
                ++tiles;
                const PageView page = cache.page_view(b, kvh, j);
                for (std::size_t t = 0; t < page.valid_len; ++t) {
                    row.k.push_back(page.k_token(t));
                    row.v.push_back(page.v_token(t));
                    row.pos.push_back(static_cast<std::uint32_t>(page.first_pos + t));
                }
            }
            if (row.pos.empty()) {
                throw OpenChunkViolation("exec_block_sparse: empty row (b=" + std::to_string(b) + ", h=" + std::to_string(h) +
                                         ", i=" + std::to_string(i) + ")");
            }
            auto [p0, p1] = layout.qblock_range(i);
            pairs += detail::attend_head(q, b, h, layout, p0, p1, row, out);
        }
        ledger.add_attn_flops(detail::pair_flops(d, pairs));
        ledger.add_active_tiles(tiles);
        ledger.add_dense_attn_flops(detail::dense_flops_for_chunk(layout, d));
    });
    return out;
}

/// Gather-based execution of a token-granular selection (query-subsampled
/// baseline). Each (b, kv head) row is copied once and shared by its heads.
inline TensorF32 exec_token_gather(const TensorF32& q, const PagedKVCache& cache, const TokenSelection& sel,
                                   const CausalLayout& layout, CostLedger& ledger, std::size_t workers = 1) {
    detail::check_chunk_inputs(q, cache, layout);
    KVUNION_CHECK(sel.batch == q.dim(0) && sel.kv_heads == cache.kv_heads(), ShapeError,
                  "exec_token_gather: selection dims do not match");
    TensorF32 out(q.shape());
    const std::size_t hkv = cache.kv_heads(), ratio = q.dim(1) / hkv, d = q.dim(3);
    parallel_for(sel.batch * hkv, workers, [&](std::size_t r) {
        const std::size_t b = r / hkv, kvh = r % hkv;
        const GatheredKV compact = gather_tokens(cache, b, kvh, sel.row(b, kvh), ledger);
        ledger.add_metadata_bytes(kIndexBytes * compact.positions.size());
        detail::RowTokens row;
        row.pos = compact.positions;
        for (std::size_t n = 0; n < compact.positions.size(); ++n) {
            row.k.push_back(compact.k.row({n}).data());
            row.v.push_back(compact.v.row({n}).data());
        }
        std::uint64_t pairs = 0;
        for (std::size_t h = kvh * ratio; h < (kvh + 1) * ratio; ++h)
            pairs += detail::attend_head(q, b, h, layout, 0, layout.chunk_len, row, out);
        ledger.add_attn_flops(detail::pair_flops(d, pairs));
        ledger.add_dense_attn_flops(ratio * detail::dense_flops_for_chunk(layout, d));
    });
    return out;
}

inline TensorF32 execute(const TensorF32& q, const PagedKVCache& cache, const ExecPlan& plan, const BlockMask& mask,
                         CostLedger& ledger, std::size_t workers = 1) {
    switch (plan.backend) {
        case Backend::zero_copy_paged: return exec_zero_copy(q, cache, plan, ledger, workers);
        case Backend::copy_compact: return exec_copy_compact(q, cache, plan, ledger, workers);
        case Backend::block_sparse_tiles: return exec_block_sparse(q, cache, mask, plan.layout, ledger, workers);
    }
    throw ConfigError("execute: unknown backend");
}

struct CostSummary {
    CostCounters counters;
    /// Per-active-tile fixed cost folded into the sparse FLOP count.
    double tile_fixed_cost = 0.0;
    double effective_attn_flops = 0.0;
    /// dense_attn_flops / effective_attn_flops.
    double ideal_speedup = 1.0;
};

inline CostSummary cost_summary(const CostCounters& c, double tile_fixed_cost = 0.0) {
    CostSummary s{c, tile_fixed_cost, static_cast<double>(c.attn_flops) + tile_fixed_cost * static_cast<double>(c.active_tiles),
                  1.0};
    if (s.effective_attn_flops > 0.0) s.ideal_speedup = static_cast<double>(c.dense_attn_flops) / s.effective_attn_flops;
    return s;
}

inline CostSummary cost_summary(const CostLedger& ledger, double tile_fixed_cost = 0.0) {
    return cost_summary(ledger.snapshot(), tile_fixed_cost);
}

}  // namespace kvunion
