// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>

namespace kvunion {

/// Bytes per stored K/V element in the cost model (float32 payload).
inline constexpr std::uint64_t kElemBytes = 4;
/// Bytes per CSR index / position-remap entry.
inline constexpr std::uint64_t kIndexBytes = 4;

/// Plain snapshot of the ledger counters.
struct CostCounters {
    std::uint64_t kv_bytes_copied = 0;
    std::uint64_t metadata_bytes_built = 0;
    std::uint64_t attn_flops = 0;
    std::uint64_t score_flops = 0;
    /// FLOPs full causal attention would have spent on the same queries.
    std::uint64_t dense_attn_flops = 0;
    /// (q-block, kv-block) tiles visited by the block-sparse executor.
    std::uint64_t active_tiles = 0;

    CostCounters operator-(const CostCounters& o) const {
        return {kv_bytes_copied - o.kv_bytes_copied,       metadata_bytes_built - o.metadata_bytes_built,
                attn_flops - o.attn_flops,                 score_flops - o.score_flops,
                dense_attn_flops - o.dense_attn_flops,     active_tiles - o.active_tiles};
    }
    CostCounters& operator+=(const CostCounters& o) {
        kv_bytes_copied += o.kv_bytes_copied;
        metadata_bytes_built += o.metadata_bytes_built;
        attn_flops += o.attn_flops;
        score_flops += o.score_flops;
        dense_attn_flops += o.dense_attn_flops;
        active_tiles += o.active_tiles;
        return *this;
    }
    bool operator==(const CostCounters&) const = default;
};

/// Monotone counters, safe to bump from concurrent workers. Values are exact
/// once all workers have joined.
class CostLedger {
public:
    void add_kv_bytes_copied(std::uint64_t n) noexcept { kv_bytes_copied_.fetch_add(n, std::memory_order_relaxed); }
    void add_metadata_bytes(std::uint64_t n) noexcept { metadata_bytes_.fetch_add(n, std::memory_order_relaxed); }
    void add_attn_flops(std::uint64_t n) noexcept { attn_flops_.fetch_add(n, std::memory_order_relaxed); }
    void add_score_flops(std::uint64_t n) noexcept { score_flops_.fetch_add(n, std::memory_order_relaxed); }
    void add_dense_attn_flops(std::uint64_t n) noexcept { dense_flops_.fetch_add(n, std::memory_order_relaxed); }
    void add_active_tiles(std::uint64_t n) noexcept { active_tiles_.fetch_add(n, std::memory_order_relaxed); }

    CostCounters snapshot() const noexcept {
        return {kv_bytes_copied_.load(), metadata_bytes_.load(), attn_flops_.load(),
                score_flops_.load(),     dense_flops_.load(),    active_tiles_.load()};
    }

private:
    std::atomic<std::uint64_t> kv_bytes_copied_{0};
    std::atomic<std::uint64_t> metadata_bytes_{0};
    std::atomic<std::uint64_t> attn_flops_{0};
    std::atomic<std::uint64_t> score_flops_{0};
    std::atomic<std::uint64_t> dense_flops_{0};
    std::atomic<std::uint64_t> active_tiles_{0};
};

}  // namespace kvunion
