// SPDX-License-Identifier: Apache-2.0
//
// Lowering of a per-(head, q-block) BlockMask into per-(batch, execution
// group) KV block tables:
//
//   head mask   Mbar[b,h,j] = OR_i M[b,h,i,j]            (q-block union)
//   group mask  G[b,g,j]    = OR_{h in H(g)} Mbar[b,h,j]  (intra-group union)
//   table       T[b,g]      = { j : G[b,g,j] = 1 }
//
// T[b,g] is the smallest block list shared by all q-blocks and heads of the
// group that still contains every tile the mask selected.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kvunion/attention.hpp"
#include "kvunion/block_table.hpp"
#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/pattern_search.hpp"

namespace kvunion {

/// Bit rows over kv blocks, indexed [b, row, j]. Tag keeps head rows and
/// group rows from being mixed up.
template <typename Tag>
class KVRowMask {
public:
    KVRowMask() = default;
    KVRowMask(std::size_t batch, std::size_t rows, std::size_t n_kvblocks)
        : batch_(batch), rows_(rows), nkv_(n_kvblocks), bits_(batch * rows * n_kvblocks, 0) {}

    std::size_t batch() const noexcept { return batch_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t n_kvblocks() const noexcept { return nkv_; }

    bool get(std::size_t b, std::size_t r, std::size_t j) const { return bits_[index(b, r, j)] != 0; }
    void set(std::size_t b, std::size_t r, std::size_t j, bool on = true) { bits_[index(b, r, j)] = on ? 1 : 0; }

    std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }
    /// Packed size of the bit array.
    std::uint64_t packed_bytes() const noexcept { return (bits_.size() + 7) / 8; }

    bool operator==(const KVRowMask&) const = default;

private:
    std::size_t index(std::size_t b, std::size_t r, std::size_t j) const {
        KVUNION_CHECK(b < batch_ && r < rows_ && j < nkv_, IndexError, "kv_row_mask: index out of range");
        return (b * rows_ + r) * nkv_ + j;
    }

    std::size_t batch_ = 0;
    std::size_t rows_ = 0;
    std::size_t nkv_ = 0;
    std::vector<std::uint8_t> bits_;
};

using HeadKVMask = KVRowMask<struct HeadRowTag>;
using GroupKVMask = KVRowMask<struct GroupRowTag>;

inline HeadKVMask q_block_union(const BlockMask& mask, CostLedger* ledger = nullptr) {
    HeadKVMask out(mask.batch(), mask.heads(), mask.n_kvblocks());
    for (std::size_t b = 0; b < mask.batch(); ++b)
        for (std::size_t h = 0; h < mask.heads(); ++h)
            for (std::size_t i = 0; i < mask.n_qblocks(); ++i)
                for (std::size_t j = 0; j < mask.n_kvblocks(); ++j)
                    if (mask.get(b, h, i, j)) out.set(b, h, j);
    if (ledger) ledger->add_metadata_bytes(out.packed_bytes());
    return out;
}

inline GroupKVMask intra_group_union(const HeadKVMask& hm, const GQAConfig& cfg) {
    cfg.validate();
    KVUNION_CHECK(hm.rows() == cfg.num_q_heads, ShapeError,
                  "intra_group_union: mask has " + std::to_string(hm.rows()) + " heads, config has " +
                      std::to_string(cfg.num_q_heads));
    GroupKVMask out(hm.batch(), cfg.n_groups(), hm.n_kvblocks());
    for (std::size_t b = 0; b < hm.batch(); ++b)
        for (std::size_t h = 0; h < hm.rows(); ++h)
            for (std::size_t j = 0; j < hm.n_kvblocks(); ++j)
                if (hm.get(b, h, j)) out.set(b, map_head_to_group(h, cfg), j);
    return out;
}

/// CSR table in pseudo-row order r = b * n_groups + g, blocks ascending.
/// Every row must already hold all current-chunk blocks.
inline KVBlockTable build_block_table(const GroupKVMask& gm, const CausalLayout& layout, CostLedger* ledger = nullptr) {
    KVUNION_CHECK(gm.n_kvblocks() == layout.n_kvblocks(), ShapeError, "build_block_table: kv block count != layout");
    std::vector<std::uint32_t> indptr{0};
    std::vector<std::uint32_t> indices;
    for (std::size_t b = 0; b < gm.batch(); ++b) {
        for (std::size_t g = 0; g < gm.rows(); ++g) {
            for (std::size_t j = layout.first_chunk_block(); j < gm.n_kvblocks(); ++j) {
                if (!gm.get(b, g, j)) {
                    throw OpenChunkViolation("build_block_table: row (b=" + std::to_string(b) + ", g=" + std::to_string(g) +
                                             ") is missing current-chunk block " + std::to_string(j));
                }
            }
            for (std::size_t j = 0; j < gm.n_kvblocks(); ++j) {
                if (gm.get(b, g, j)) indices.push_back(static_cast<std::uint32_t>(j));
            }
            indptr.push_back(static_cast<std::uint32_t>(indices.size()));
        }
    }
    auto table = KVBlockTable::from_csr(gm.batch(), gm.rows(), gm.n_kvblocks(), std::move(indptr), std::move(indices));
    if (ledger) ledger->add_metadata_bytes(table.metadata_bytes());
    return table;
}

/// Full selection-stage lowering of one chunk's mask.
inline KVBlockTable lower_mask(const BlockMask& mask, const GQAConfig& cfg, const CausalLayout& layout,
                               CostLedger* ledger = nullptr) {
    return build_block_table(intra_group_union(q_block_union(mask, ledger), cfg), layout, ledger);
}

/// Every mask-selected tile's kv block appears in its group's table row.
inline bool check_coverage(const KVBlockTable& table, const BlockMask& mask, const GQAConfig& cfg) {
    if (table.batch() != mask.batch() || table.n_groups() != cfg.n_groups() || mask.heads() != cfg.num_q_heads) return false;
    for (std::size_t b = 0; b < mask.batch(); ++b) {
        for (std::size_t h = 0; h < mask.heads(); ++h) {
            const auto row = table.row(b, map_head_to_group(h, cfg));
            for (std::size_t i = 0; i < mask.n_qblocks(); ++i) {
                for (std::size_t j = 0; j < mask.n_kvblocks(); ++j) {
                    if (mask.get(b, h, i, j) && std::find(row.begin(), row.end(), j) == row.end()) return false;
                }
            }
        }
    }
    return true;
}

/// Every table entry has a witness (h in H(g), i) with M[b,h,i,j] = 1, or is
/// a current-chunk block.
inline bool check_minimality(const KVBlockTable& table, const BlockMask& mask, const GQAConfig& cfg,
                             const CausalLayout& layout) {
    if (table.batch() != mask.batch() || table.n_groups() != cfg.n_groups() || mask.heads() != cfg.num_q_heads) return false;
    for (std::size_t b = 0; b < table.batch(); ++b) {
        for (std::size_t g = 0; g < table.n_groups(); ++g) {
            auto [h0, h1] = cfg.group_heads(g);
            for (auto j : table.row(b, g)) {
                if (j >= mask.n_kvblocks()) return false;
                if (layout.is_chunk_block(j)) continue;
                bool witnessed = false;
                for (std::size_t h = h0; h < h1 && !witnessed; ++h)
                    for (std::size_t i = 0; i < mask.n_qblocks() && !witnessed; ++i) witnessed = mask.get(b, h, i, j);
                if (!witnessed) return false;
            }
        }
    }
    return true;
}

/// Fraction of counted block slots left unselected after each aggregation
/// step. Counted slots are causal (b, h, i, j) tiles whose kv block lies
/// before the current chunk; a slot is selected after a union step when the
/// unioned row containing (b, h) selects block j.
struct SparsityReport {
    double pre_union = 0.0;
    double q_union = 0.0;
    double subgroup_union = 0.0;
    double group_union = 0.0;
    std::size_t counted_slots = 0;
};

/// Subgroup size actually used for a GQA ratio: min(requested, ratio), or
/// the whole group when that does not divide it.
inline std::size_t effective_subgroup_size(std::size_t requested, std::size_t ratio) {
    const std::size_t s = std::max<std::size_t>(1, std::min(requested, ratio));
    return ratio % s == 0 ? s : ratio;
}

inline SparsityReport sparsity_stats(const BlockMask& mask, const GQAConfig& cfg, const CausalLayout& layout,
                                     std::size_t subgroup_size = 4) {
    cfg.validate();
    KVUNION_CHECK(mask.heads() == cfg.num_q_heads && mask.matches_layout(layout), ShapeError,
                  "sparsity_stats: mask dims do not match config or layout");
    const std::size_t ratio = cfg.ratio();
    const std::size_t sub = effective_subgroup_size(subgroup_size, ratio);
    const std::size_t nkv = mask.n_kvblocks();
    const HeadKVMask hm = q_block_union(mask);

    std::size_t total = 0, pre = 0, qu = 0, su = 0, gu = 0;
    std::vector<std::uint8_t> sub_row(nkv), group_row(nkv);
    for (std::size_t b = 0; b < mask.batch(); ++b) {
        for (std::size_t h = 0; h < mask.heads(); ++h) {
            const std::size_t s0 = h / sub * sub, g0 = h / ratio * ratio;
            for (std::size_t j = 0; j < nkv; ++j) {
                sub_row[j] = 0;
                group_row[j] = 0;
                for (std::size_t x = s0; x < s0 + sub; ++x) sub_row[j] |= hm.get(b, x, j);
                for (std::size_t x = g0; x < g0 + ratio; ++x) group_row[j] |= hm.get(b, x, j);
            }
            for (std::size_t i = 0; i < mask.n_qblocks(); ++i) {
                for (std::size_t j = 0; j < nkv; ++j) {
                    if (!layout.tile_causal(i, j) || layout.is_chunk_block(j)) continue;
                    ++total;
                    pre += mask.get(b, h, i, j);
                    qu += hm.get(b, h, j);
                    su += sub_row[j];
                    gu += group_row[j];
                }
            }
        }
    }
    auto sparsity = [&](std::size_t selected) {
        return total == 0 ? 0.0 : 1.0 - static_cast<double>(selected) / static_cast<double>(total);
    };
    return {sparsity(pre), sparsity(qu), sparsity(su), sparsity(gu), total};
}

}  // namespace kvunion
