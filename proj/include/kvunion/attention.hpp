// SPDX-License-Identifier: Apache-2.0
//
// Dense causal attention reference and grouped-query head mapping. Every
// sparse executor in this library reduces to `detail::attend_row`, so the
// logits, softmax and value accumulation happen in exactly one place and in
// one order (the order of the KV row list handed in).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kvunion/errors.hpp"
#include "kvunion/parallel.hpp"
#include "kvunion/tensor.hpp"

namespace kvunion {

/// Query-head to KV-head and execution-group mapping.
///
/// Query head h reads KV head h / (num_q_heads / num_kv_heads). Execution
/// groups are contiguous runs of `exec_group_size` query heads; they never
/// straddle a KV head, so each group reads exactly one KV head.
struct GQAConfig {
    std::size_t num_q_heads = 1;
    std::size_t num_kv_heads = 1;
    std::size_t exec_group_size = 1;

    /// exec_group_size == 0 selects the full KV group.
    static GQAConfig make(std::size_t q_heads, std::size_t kv_heads, std::size_t exec_group_size = 0) {
        KVUNION_CHECK(q_heads > 0 && kv_heads > 0, ShapeError, "gqa: head counts must be positive");
        KVUNION_CHECK(q_heads % kv_heads == 0, ShapeError,
                      "gqa: num_q_heads " + std::to_string(q_heads) + " not divisible by num_kv_heads " +
                          std::to_string(kv_heads));
        GQAConfig cfg{q_heads, kv_heads, exec_group_size == 0 ? q_heads / kv_heads : exec_group_size};
        cfg.validate();
        return cfg;
    }

    void validate() const {
        KVUNION_CHECK(num_q_heads > 0 && num_kv_heads > 0 && exec_group_size > 0, ShapeError,
                      "gqa: counts must be positive");
        KVUNION_CHECK(num_q_heads % num_kv_heads == 0, ShapeError, "gqa: num_q_heads not divisible by num_kv_heads");
        KVUNION_CHECK(ratio() % exec_group_size == 0, ShapeError,
                      "gqa: exec_group_size " + std::to_string(exec_group_size) + " does not divide group ratio " +
                          std::to_string(ratio()));
    }

    std::size_t ratio() const noexcept { return num_q_heads / num_kv_heads; }
    std::size_t n_groups() const noexcept { return num_q_heads / exec_group_size; }

    std::size_t kv_head_of(std::size_t h) const {
        KVUNION_CHECK(h < num_q_heads, IndexError, "gqa: query head " + std::to_string(h) + " out of range");
        return h / ratio();
    }

    /// Half-open range of query heads in execution group g.
    std::pair<std::size_t, std::size_t> group_heads(std::size_t g) const {
        KVUNION_CHECK(g < n_groups(), IndexError, "gqa: group " + std::to_string(g) + " out of range");
        return {g * exec_group_size, (g + 1) * exec_group_size};
    }

    std::size_t kv_head_of_group(std::size_t g) const { return kv_head_of(group_heads(g).first); }
};

inline std::size_t map_head_to_group(std::size_t h, const GQAConfig& cfg) {
    KVUNION_CHECK(h < cfg.num_q_heads, IndexError, "map_head_to_group: head " + std::to_string(h) + " out of range");
    return h / cfg.exec_group_size;
}

/// Token and block geometry of one prefill chunk against the cache.
///
/// Query blocks tile the chunk from its first token; KV blocks tile absolute
/// positions from 0. Query p (chunk-local) sees absolute KV positions
/// 0..prefix_len + p.
struct CausalLayout {
    std::size_t prefix_len = 0;
    std::size_t chunk_len = 0;
    std::size_t block_size = 64;

    std::size_t total_len() const noexcept { return prefix_len + chunk_len; }
    /// Inclusive last absolute KV position visible to chunk query p.
    std::size_t kv_limit(std::size_t p) const noexcept { return prefix_len + p; }

    std::size_t n_kvblocks() const noexcept { return (total_len() + block_size - 1) / block_size; }
    std::size_t n_qblocks() const noexcept { return (chunk_len + block_size - 1) / block_size; }

    /// First KV block overlapping the current chunk.
    std::size_t first_chunk_block() const noexcept { return prefix_len / block_size; }
    bool is_chunk_block(std::size_t j) const noexcept { return j >= first_chunk_block() && j < n_kvblocks(); }

    std::pair<std::size_t, std::size_t> qblock_range(std::size_t i) const noexcept {
        return {i * block_size, std::min((i + 1) * block_size, chunk_len)};
    }
    std::pair<std::size_t, std::size_t> kvblock_range(std::size_t j) const noexcept {
        return {j * block_size, std::min((j + 1) * block_size, total_len())};
    }

    /// True when some query of q-block i may see some token of kv-block j.
    bool tile_causal(std::size_t i, std::size_t j) const noexcept {
        auto [q0, q1] = qblock_range(i);
        if (q1 <= q0 || j >= n_kvblocks()) return false;
        return j * block_size <= kv_limit(q1 - 1);
    }

    void validate() const {
        KVUNION_CHECK(block_size > 0, ValidationError, "layout: block_size must be positive");
        KVUNION_CHECK(chunk_len > 0, ValidationError, "layout: chunk_len must be positive");
    }
};

namespace detail {

/// Fixed-order dot product: eight interleaved partial sums combined pairwise,
/// then the scalar tail. Same order on every call site.
inline float dot(const float* a, const float* b, std::size_t n) noexcept {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    }
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail;
}

inline float inv_sqrt_dim(std::size_t d) noexcept { return 1.0f / std::sqrt(static_cast<float>(d)); }

/// Softmax-weighted sum over the given KV rows, in list order.
/// `weights_out`, when non-null, receives the normalized weights.
inline void attend_row(const float* q, std::span<const float* const> k_rows, std::span<const float* const> v_rows,
                       std::size_t d, float* out, std::vector<float>& scratch, float* weights_out = nullptr) {
    const std::size_t n = k_rows.size();
    if (n == 0) throw DegenerateRowError("attention: query row has an empty allowed KV set");
    const float scale = inv_sqrt_dim(d);
    scratch.resize(n);
    float row_max = -std::numeric_limits<float>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        scratch[t] = dot(q, k_rows[t], d) * scale;
        row_max = std::max(row_max, scratch[t]);
    }
    float sum = 0.0f;
    for (std::size_t t = 0; t < n; ++t) {
        scratch[t] = std::exp(scratch[t] - row_max);
        sum += scratch[t];
    }
    const float inv = 1.0f / sum;
    std::fill(out, out + d, 0.0f);
    for (std::size_t t = 0; t < n; ++t) {
        const float w = scratch[t] * inv;
        if (weights_out) weights_out[t] = w;
        const float* v = v_rows[t];
        for (std::size_t x = 0; x < d; ++x) out[x] += w * v[x];
    }
}

inline void check_single_head(const TensorF32& q, const TensorF32& k, const TensorF32& v, const CausalLayout& layout) {
    layout.validate();
    KVUNION_CHECK(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, ShapeError, "attention: q, k, v must be rank 2");
    const std::size_t d = q.dim(1);
    KVUNION_CHECK(d > 0, ShapeError, "attention: head dim must be positive");
    KVUNION_CHECK(k.dim(1) == d && v.dim(1) == d, ShapeError, "attention: head dim mismatch");
    KVUNION_CHECK(q.dim(0) == layout.chunk_len, ShapeError,
                  "attention: Lq " + std::to_string(q.dim(0)) + " != chunk_len " + std::to_string(layout.chunk_len));
    KVUNION_CHECK(k.dim(0) == layout.total_len() && v.dim(0) == layout.total_len(), ShapeError,
                  "attention: Lkv does not equal prefix_len + chunk_len");
}

inline void check_finite(const TensorF32& t, const char* name) {
    for (float x : t.data()) {
        KVUNION_CHECK(std::isfinite(x), ValidationError, std::string("attention: non-finite value in ") + name);
    }
}

inline std::vector<const float*> row_pointers(const TensorF32& t) {
    std::vector<const float*> rows(t.dim(0));
    const std::size_t d = t.dim(1);
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = t.data().data() + r * d;
    return rows;
}

}  // namespace detail

/// softmax(q kᵀ / √D) v over the causal region, q: [Lq, D], k, v: [Lkv, D].
inline TensorF32 dense_attention(const TensorF32& q, const TensorF32& k, const TensorF32& v, const CausalLayout& layout) {
    detail::check_single_head(q, k, v, layout);
    detail::check_finite(q, "q");
    detail::check_finite(k, "k");
    detail::check_finite(v, "v");
    const std::size_t d = q.dim(1);
    auto k_rows = detail::row_pointers(k);
    auto v_rows = detail::row_pointers(v);
    TensorF32 out({layout.chunk_len, d});
    std::vector<float> scratch;
    for (std::size_t p = 0; p < layout.chunk_len; ++p) {
        const std::size_t n = layout.kv_limit(p) + 1;
        detail::attend_row(q.row({p}).data(), std::span(k_rows).first(n), std::span(v_rows).first(n), d,
                           out.row({p}).data(), scratch);
    }
    return out;
}

/// Introspection hook: the [Lq, Lkv] softmax weights dense_attention uses.
/// Causally forbidden entries are 0.
inline TensorF32 attention_weights(const TensorF32& q, const TensorF32& k, const CausalLayout& layout) {
    detail::check_single_head(q, k, k, layout);
    const std::size_t d = q.dim(1);
    const std::size_t lkv = layout.total_len();
    auto k_rows = detail::row_pointers(k);
    TensorF32 w({layout.chunk_len, lkv});
    std::vector<float> scratch;
    std::vector<float> out(d);
    for (std::size_t p = 0; p < layout.chunk_len; ++p) {
        const std::size_t n = layout.kv_limit(p) + 1;
        detail::attend_row(q.row({p}).data(), std::span(k_rows).first(n), std::span(k_rows).first(n), d, out.data(),
                           scratch, w.row({p}).data());
    }
    return w;
}

/// Per-query allowed KV index sets (absolute positions).
using AllowedSets = std::vector<std::vector<std::size_t>>;

/// Attention renormalized over allowed_kv[p] only, summed in ascending index order.
inline TensorF32 masked_dense_attention(const TensorF32& q, const TensorF32& k, const TensorF32& v,
                                        const CausalLayout& layout, const AllowedSets& allowed_kv) {
    detail::check_single_head(q, k, v, layout);
    detail::check_finite(q, "q");
    detail::check_finite(k, "k");
    detail::check_finite(v, "v");
    KVUNION_CHECK(allowed_kv.size() == layout.chunk_len, ShapeError, "masked_dense_attention: one set per query required");
    const std::size_t d = q.dim(1);
    TensorF32 out({layout.chunk_len, d});
    std::vector<float> scratch;
    std::vector<const float*> k_rows;
    std::vector<const float*> v_rows;
    for (std::size_t p = 0; p < layout.chunk_len; ++p) {
        std::vector<std::size_t> idx = allowed_kv[p];
        if (idx.empty()) {
            throw DegenerateRowError("masked_dense_attention: empty allowed set for query " + std::to_string(p));
        }
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        KVUNION_CHECK(idx.back() <= layout.kv_limit(p), ValidationError,
                      "masked_dense_attention: allowed set of query " + std::to_string(p) + " leaves causal region");
        k_rows.clear();
        v_rows.clear();
        for (std::size_t t : idx) {
            k_rows.push_back(k.row({t}).data());
            v_rows.push_back(v.row({t}).data());
        }
        detail::attend_row(q.row({p}).data(), k_rows, v_rows, d, out.row({p}).data(), scratch);
    }
    return out;
}

/// Full causal allowed sets for a layout.
inline AllowedSets causal_allowed_sets(const CausalLayout& layout) {
    AllowedSets sets(layout.chunk_len);
    for (std::size_t p = 0; p < layout.chunk_len; ++p) {
        sets[p].resize(layout.kv_limit(p) + 1);
        for (std::size_t t = 0; t < sets[p].size(); ++t) sets[p][t] = t;
    }
    return sets;
}

/// Dense causal attention over all heads: q [B, H_q, Lq, D], k, v [B, H_kv, Lkv, D].
inline TensorF32 dense_attention_heads(const TensorF32& q, const TensorF32& k, const TensorF32& v,
                                       const CausalLayout& layout, std::size_t workers = 1) {
    layout.validate();
    KVUNION_CHECK(q.rank() == 4 && k.rank() == 4 && v.rank() == 4, ShapeError, "attention: expected rank-4 tensors");
    KVUNION_CHECK(k.shape() == v.shape(), ShapeError, "attention: k and v shapes differ");
    const std::size_t b_n = q.dim(0), hq = q.dim(1), d = q.dim(3), hkv = k.dim(1);
    KVUNION_CHECK(k.dim(0) == b_n && k.dim(3) == d, ShapeError, "attention: batch or head dim mismatch");
    KVUNION_CHECK(q.dim(2) == layout.chunk_len && k.dim(2) == layout.total_len(), ShapeError,
                  "attention: sequence lengths do not match layout");
    const auto gqa = GQAConfig::make(hq, hkv);
    TensorF32 out(q.shape());
    parallel_for(b_n * hq, workers, [&](std::size_t bh) {
        const std::size_t b = bh / hq, h = bh % hq, kvh = gqa.kv_head_of(h);
        std::vector<const float*> k_rows(layout.total_len()), v_rows(layout.total_len());
        for (std::size_t t = 0; t < k_rows.size(); ++t) {
            k_rows[t] = k.row({b, kvh, t}).data();
            v_rows[t] = v.row({b, kvh, t}).data();
        }
        std::vector<float> scratch;
        for (std::size_t p = 0; p < layout.chunk_len; ++p) {
            const std::size_t n = layout.kv_limit(p) + 1;
            detail::attend_row(q.row({b, h, p}).data(), std::span(k_rows).first(n), std::span(v_rows).first(n), d,
                               out.row({b, h, p}).data(), scratch);
        }
    });
    return out;
}

}  // namespace kvunion
