// SPDX-License-Identifier: Apache-2.0
//
// Block-level pattern search: scorers that rate (q-block, kv-block) tiles,
// the threshold rule that turns scores into a BlockMask, and the
// query-subsampled token selector used as a coverage baseline.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kvunion/attention.hpp"
#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/paged_kv_cache.hpp"
#include "kvunion/parallel.hpp"
#include "kvunion/tensor.hpp"

namespace kvunion {

/// Dense bit array M[b, h, i, j] over (batch, query head, q-block, kv-block).
class BlockMask {
public:
    BlockMask() = default;
    BlockMask(std::size_t batch, std::size_t heads, std::size_t n_qblocks, std::size_t n_kvblocks)
        : batch_(batch), heads_(heads), nq_(n_qblocks), nkv_(n_kvblocks), bits_(batch * heads * n_qblocks * n_kvblocks, 0) {}

    /// Every causally reachable tile set.
    static BlockMask full_causal(std::size_t batch, std::size_t heads, const CausalLayout& layout) {
        BlockMask m(batch, heads, layout.n_qblocks(), layout.n_kvblocks());
        for (std::size_t bh = 0; bh < batch * heads; ++bh) {
            for (std::size_t i = 0; i < m.nq_; ++i) {
                for (std::size_t j = 0; j < m.nkv_; ++j) m.bits_[(bh * m.nq_ + i) * m.nkv_ + j] = layout.tile_causal(i, j);
            }
        }
        return m;
    }

    std::size_t batch() const noexcept { return batch_; }
    std::size_t heads() const noexcept { return heads_; }
    std::size_t n_qblocks() const noexcept { return nq_; }
    std::size_t n_kvblocks() const noexcept { return nkv_; }

    bool get(std::size_t b, std::size_t h, std::size_t i, std::size_t j) const { return bits_[index(b, h, i, j)] != 0; }
    void set(std::size_t b, std::size_t h, std::size_t i, std::size_t j, bool on = true) {
        bits_[index(b, h, i, j)] = on ? 1 : 0;
    }

    std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

    /// Pointwise superset test.
    bool contains(const BlockMask& other) const {
        KVUNION_CHECK(same_dims(other), ShapeError, "block_mask: dims differ");
        for (std::size_t n = 0; n < bits_.size(); ++n) {
            if (other.bits_[n] && !bits_[n]) return false;
        }
        return true;
    }

    bool same_dims(const BlockMask& o) const noexcept {
        return batch_ == o.batch_ && heads_ == o.heads_ && nq_ == o.nq_ && nkv_ == o.nkv_;
    }

    bool matches_layout(const CausalLayout& layout) const noexcept {
        return nq_ == layout.n_qblocks() && nkv_ == layout.n_kvblocks();
    }

    /// No bit set on a tile outside the causal region.
    bool is_causal_consistent(const CausalLayout& layout) const {
        if (!matches_layout(layout)) return false;
        for (std::size_t bh = 0; bh < batch_ * heads_; ++bh) {
            for (std::size_t i = 0; i < nq_; ++i) {
                for (std::size_t j = 0; j < nkv_; ++j) {
                    if (bits_[(bh * nq_ + i) * nkv_ + j] && !layout.tile_causal(i, j)) return false;
                }
            }
        }
        return true;
    }

    /// Every causal tile on a current-chunk kv block is set.
    bool chunk_open(const CausalLayout& layout) const {
        if (!matches_layout(layout)) return false;
        for (std::size_t bh = 0; bh < batch_ * heads_; ++bh) {
            for (std::size_t i = 0; i < nq_; ++i) {
                for (std::size_t j = layout.first_chunk_block(); j < nkv_; ++j) {
                    if (layout.tile_causal(i, j) && !bits_[(bh * nq_ + i) * nkv_ + j]) return false;
                }
            }
        }
        return true;
    }

    /// Clears non-causal tiles and sets every causal current-chunk tile.
    void apply_layout_rules(const CausalLayout& layout) {
        KVUNION_CHECK(matches_layout(layout), ShapeError, "block_mask: dims do not match layout");
        for (std::size_t bh = 0; bh < batch_ * heads_; ++bh) {
            for (std::size_t i = 0; i < nq_; ++i) {
                for (std::size_t j = 0; j < nkv_; ++j) {
                    auto& bit = bits_[(bh * nq_ + i) * nkv_ + j];
                    const bool causal = layout.tile_causal(i, j);
                    if (!causal) bit = 0;
                    else if (layout.is_chunk_block(j)) bit = 1;
                }
            }
        }
    }

    /// Header "B H n_qblocks n_kvblocks", then one "b h i j" line per set bit
    /// in row-major order.
    void dump(std::ostream& os) const {
        os << batch_ << ' ' << heads_ << ' ' << nq_ << ' ' << nkv_ << '\n';
        for (std::size_t b = 0; b < batch_; ++b)
            for (std::size_t h = 0; h < heads_; ++h)
                for (std::size_t i = 0; i < nq_; ++i)
                    for (std::size_t j = 0; j < nkv_; ++j)
                        if (get(b, h, i, j)) os << b << ' ' << h << ' ' << i << ' ' << j << '\n';
    }

    static BlockMask parse(std::istream& is) {
        std::string line;
        KVUNION_CHECK(static_cast<bool>(std::getline(is, line)), ValidationError, "block_mask: missing header");
        std::istringstream hdr(line);
        std::size_t b = 0, h = 0, nq = 0, nkv = 0;
        KVUNION_CHECK(static_cast<bool>(hdr >> b >> h >> nq >> nkv), ValidationError, "block_mask: malformed header");
        BlockMask m(b, h, nq, nkv);
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::size_t x0, x1, x2, x3;
            KVUNION_CHECK(static_cast<bool>(ls >> x0 >> x1 >> x2 >> x3), ValidationError, "block_mask: malformed record");
            KVUNION_CHECK(x0 < b && x1 < h && x2 < nq && x3 < nkv, IndexError, "block_mask: record out of range");
            m.set(x0, x1, x2, x3);
        }
        return m;
    }

    bool operator==(const BlockMask&) const = default;

private:
    std::size_t index(std::size_t b, std::size_t h, std::size_t i, std::size_t j) const {
        KVUNION_CHECK(b < batch_ && h < heads_ && i < nq_ && j < nkv_, IndexError, "block_mask: index out of range");
        return ((b * heads_ + h) * nq_ + i) * nkv_ + j;
    }

    std::size_t batch_ = 0;
    std::size_t heads_ = 0;
    std::size_t nq_ = 0;
    std::size_t nkv_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Non-negative per-tile importance, 0 outside the causal region.
struct BlockScores {
    std::size_t batch = 0, heads = 0, n_qblocks = 0, n_kvblocks = 0;
    std::vector<float> values;

    BlockScores() = default;
    BlockScores(std::size_t b, std::size_t h, std::size_t nq, std::size_t nkv)
        : batch(b), heads(h), n_qblocks(nq), n_kvblocks(nkv), values(b * h * nq * nkv, 0.0f) {}

    float& at(std::size_t b, std::size_t h, std::size_t i, std::size_t j) {
        return values[((b * heads + h) * n_qblocks + i) * n_kvblocks + j];
    }
    float at(std::size_t b, std::size_t h, std::size_t i, std::size_t j) const {
        return values[((b * heads + h) * n_qblocks + i) * n_kvblocks + j];
    }
};

enum class ScorerKind { exact_oracle, max_threshold, all_dense };

struct ScorerConfig {
    ScorerKind kind = ScorerKind::max_threshold;
    /// Keep fraction of the row max; used by max_threshold and by
    /// threshold_mask over exact scores.
    float alpha = 0.06f;
    std::size_t block_size = 64;
    /// Always keep kv block 0 (attention sink).
    bool keep_sink = true;
    /// Always keep the last prefix block before the current chunk.
    bool keep_local_prefix_block = false;
    /// Score with the mean query of each q-block instead of every query.
    bool pool_queries = false;

    void validate() const {
        KVUNION_CHECK(block_size > 0, ConfigError, "scorer: block_size must be positive");
        if (kind != ScorerKind::all_dense) {
            KVUNION_CHECK(alpha > 0.0f && alpha <= 1.0f, ConfigError, "scorer: alpha must lie in (0, 1]");
        }
    }
};

namespace detail {

inline void check_chunk_inputs(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout) {
    layout.validate();
    KVUNION_CHECK(q.rank() == 4, ShapeError, "pattern_search: q must be [B, H_q, C, D]");
    KVUNION_CHECK(q.dim(0) == cache.batch() && q.dim(3) == cache.head_dim(), ShapeError,
                  "pattern_search: q batch or head dim does not match cache");
    KVUNION_CHECK(q.dim(1) % cache.kv_heads() == 0, ShapeError, "pattern_search: H_q not divisible by H_kv");
    KVUNION_CHECK(q.dim(2) == layout.chunk_len, ShapeError, "pattern_search: q length != chunk_len");
    KVUNION_CHECK(cache.length() == layout.total_len(), ShapeError,
                  "pattern_search: cache length " + std::to_string(cache.length()) + " != prefix_len + chunk_len");
    KVUNION_CHECK(cache.block_size() == layout.block_size, ShapeError,
                  "pattern_search: page size must equal selection block size");
}

/// Dense-oracle weights of selected chunk queries of head (b, h): one row of
/// length total_len per query in `queries`.
inline std::vector<std::vector<float>> head_weights(const TensorF32& q, const PagedKVCache& cache,
                                                    const CausalLayout& layout, std::size_t b, std::size_t h,
                                                    const std::vector<std::size_t>& queries) {
    const std::size_t kvh = h / (q.dim(1) / cache.kv_heads());
    const std::size_t d = cache.head_dim();
    std::vector<const float*> k_rows(layout.total_len());
    for (std::size_t t = 0; t < k_rows.size(); ++t) k_rows[t] = cache.k_token(b, kvh, t);
    std::vector<std::vector<float>> w(queries.size(), std::vector<float>(layout.total_len(), 0.0f));
    std::vector<float> scratch, out(d);
    for (std::size_t n = 0; n < queries.size(); ++n) {
        const std::size_t p = queries[n];
        const std::size_t lim = layout.kv_limit(p) + 1;
        detail::attend_row(q.row({b, h, p}).data(), std::span(k_rows).first(lim), std::span(k_rows).first(lim), d,
                           out.data(), scratch, w[n].data());
    }
    return w;
}

inline std::vector<std::size_t> iota_queries(std::size_t n, std::size_t stride = 1) {
    std::vector<std::size_t> qs;
    for (std::size_t p = 0; p < n; p += stride) qs.push_back(p);
    return qs;
}

}  // namespace detail

/// Ground-truth tile importance: summed dense softmax mass per tile. Each
/// row (b, h, i) sums to the number of queries in q-block i.
inline BlockScores score_blocks_exact(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout,
                                      const ScorerConfig& cfg, std::size_t workers = 1) {
    cfg.validate();
    detail::check_chunk_inputs(q, cache, layout);
    const std::size_t bn = q.dim(0), hq = q.dim(1);
    BlockScores s(bn, hq, layout.n_qblocks(), layout.n_kvblocks());
    const auto all_queries = detail::iota_queries(layout.chunk_len);
    parallel_for(bn * hq, workers, [&](std::size_t bh) {
        const std::size_t b = bh / hq, h = bh % hq;
        const auto w = detail::head_weights(q, cache, layout, b, h, all_queries);
        for (std::size_t i = 0; i < s.n_qblocks; ++i) {
            auto [p0, p1] = layout.qblock_range(i);
            for (std::size_t j = 0; j < s.n_kvblocks; ++j) {
                if (!layout.tile_causal(i, j)) continue;
                auto [t0, t1] = layout.kvblock_range(j);
                double mass = 0.0;
                for (std::size_t p = p0; p < p1; ++p) {
                    const std::size_t hi = std::min(t1, layout.kv_limit(p) + 1);
                    for (std::size_t t = t0; t < hi; ++t) mass += w[p][t];
                }
                s.at(b, h, i, j) = static_cast<float>(mass);
            }
        }
    });
    return s;
}

/// Max-logit tile scores: exp(tile_max_logit - row_max_logit), so every
/// causal score lies in (0, 1] and each row's best tile scores 1.
inline BlockScores score_blocks_max_threshold(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout,
                                              const ScorerConfig& cfg, CostLedger& ledger, std::size_t workers = 1) {
    cfg.validate();
    KVUNION_CHECK(cfg.kind == ScorerKind::max_threshold, ConfigError, "score_blocks_max_threshold: wrong scorer kind");
    detail::check_chunk_inputs(q, cache, layout);
    const std::size_t bn = q.dim(0), hq = q.dim(1), d = q.dim(3), ratio = hq / cache.kv_heads();
    const float scale = detail::inv_sqrt_dim(d);
    BlockScores s(bn, hq, layout.n_qblocks(), layout.n_kvblocks());
    parallel_for(bn * hq, workers, [&](std::size_t bh) {
        const std::size_t b = bh / hq, h = bh % hq, kvh = h / ratio;
        std::uint64_t flops = 0;
        std::vector<float> pooled(d);
        std::vector<float> tile_max(s.n_kvblocks);
        for (std::size_t i = 0; i < s.n_qblocks; ++i) {
            auto [p0, p1] = layout.qblock_range(i);
            if (cfg.pool_queries) {
                std::fill(pooled.begin(), pooled.end(), 0.0f);
                for (std::size_t p = p0; p < p1; ++p) {
                    auto qr = q.row({b, h, p});
                    for (std::size_t x = 0; x < d; ++x) pooled[x] += qr[x];
                }
                for (auto& x : pooled) x /= static_cast<float>(p1 - p0);
            }
            float row_max = -std::numeric_limits<float>::infinity();
            for (std::size_t j = 0; j < s.n_kvblocks; ++j) {
                tile_max[j] = -std::numeric_limits<float>::infinity();
                if (!layout.tile_causal(i, j)) continue;
                auto [t0, t1] = layout.kvblock_range(j);
                if (cfg.pool_queries) {
                    const std::size_t hi = std::min(t1, layout.kv_limit(p1 - 1) + 1);
                    for (std::size_t t = t0; t < hi; ++t) {
                        tile_max[j] = std::max(tile_max[j], detail::dot(pooled.data(), cache.k_token(b, kvh, t), d) * scale);
                    }
                    flops += 2 * d * (t1 - t0);
                } else {
                    for (std::size_t p = p0; p < p1; ++p) {
                        const std::size_t hi = std::min(t1, layout.kv_limit(p) + 1);
                        const float* qr = q.row({b, h, p}).data();
                        for (std::size_t t = t0; t < hi; ++t) {
                            tile_max[j] = std::max(tile_max[j], detail::dot(qr, cache.k_token(b, kvh, t), d) * scale);
                        }
                    }
                    flops += 2 * d * (p1 - p0) * (t1 - t0);
                }
                row_max = std::max(row_max, tile_max[j]);
            }
            for (std::size_t j = 0; j < s.n_kvblocks; ++j) {
                if (layout.tile_causal(i, j)) s.at(b, h, i, j) = std::exp(tile_max[j] - row_max);
            }
        }
        ledger.add_score_flops(flops);
    });
    return s;
}

/// Keep rule: score >= alpha * row max, plus the forced blocks (current
/// chunk, the row's last causal block, optional sink and local prefix block).
/// Tiles outside the causal region are always 0.
inline BlockMask threshold_mask(const BlockScores& scores, const ScorerConfig& cfg, const CausalLayout& layout) {
    KVUNION_CHECK(cfg.alpha > 0.0f && cfg.alpha <= 1.0f, ConfigError, "threshold_mask: alpha must lie in (0, 1]");
    KVUNION_CHECK(scores.n_qblocks == layout.n_qblocks() && scores.n_kvblocks == layout.n_kvblocks(), ShapeError,
                  "threshold_mask: score dims do not match layout");
    BlockMask m(scores.batch, scores.heads, scores.n_qblocks, scores.n_kvblocks);
    const std::size_t first_chunk = layout.first_chunk_block();
    for (std::size_t b = 0; b < scores.batch; ++b) {
        for (std::size_t h = 0; h < scores.heads; ++h) {
            for (std::size_t i = 0; i < scores.n_qblocks; ++i) {
                float row_max = 0.0f;
                std::size_t last_causal = 0;
                for (std::size_t j = 0; j < scores.n_kvblocks; ++j) {
                    if (!layout.tile_causal(i, j)) continue;
                    row_max = std::max(row_max, scores.at(b, h, i, j));
                    last_causal = j;
                }
                const float cut = cfg.alpha * row_max;
                for (std::size_t j = 0; j < scores.n_kvblocks; ++j) {
                    if (!layout.tile_causal(i, j)) continue;
                    const bool keep = scores.at(b, h, i, j) >= cut || layout.is_chunk_block(j) || j == last_causal ||
                                      (cfg.keep_sink && j == 0) ||
                                      (cfg.keep_local_prefix_block && first_chunk > 0 && j == first_chunk - 1);
                    if (keep) m.set(b, h, i, j);
                }
            }
        }
    }
    return m;
}

/// Scorer dispatch: all_dense yields the full causal mask.
inline BlockMask search_pattern(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout,
                                const ScorerConfig& cfg, CostLedger& ledger, std::size_t workers = 1) {
    cfg.validate();
    switch (cfg.kind) {
        case ScorerKind::all_dense:
            detail::check_chunk_inputs(q, cache, layout);
            return BlockMask::full_causal(q.dim(0), q.dim(1), layout);
        case ScorerKind::exact_oracle:
            return threshold_mask(score_blocks_exact(q, cache, layout, cfg, workers), cfg, layout);
        case ScorerKind::max_threshold:
            return threshold_mask(score_blocks_max_threshold(q, cache, layout, cfg, ledger, workers), cfg, layout);
    }
    throw ConfigError("search_pattern: unknown scorer kind");
}

/// Token-granular KV keep sets per (batch, kv head), ascending positions.
struct TokenSelection {
    std::size_t batch = 0;
    std::size_t kv_heads = 0;
    std::vector<std::vector<std::uint32_t>> rows;

    const std::vector<std::uint32_t>& row(std::size_t b, std::size_t h) const { return rows.at(b * kv_heads + h); }
    std::size_t total_tokens() const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.size();
        return n;
    }
};

/// Query-subsampled selection: the queries at chunk positions 0, stride,
/// 2*stride, ... (over all query heads sharing a kv head) rate each prefix
/// token by mean received attention; the top ceil(budget_frac * prefix_len)
/// prefix tokens and the whole current chunk are kept.
inline TokenSelection quoka_select(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout,
                                   std::size_t sample_stride, double budget_frac, CostLedger& ledger) {
    KVUNION_CHECK(sample_stride >= 1, ValidationError, "quoka_select: sample_stride must be >= 1");
    KVUNION_CHECK(budget_frac > 0.0 && budget_frac <= 1.0, ValidationError, "quoka_select: budget_frac must lie in (0, 1]");
    detail::check_chunk_inputs(q, cache, layout);
    const std::size_t bn = q.dim(0), hq = q.dim(1), hkv = cache.kv_heads(), ratio = hq / hkv, d = q.dim(3);
    const auto sampled = detail::iota_queries(layout.chunk_len, sample_stride);
    const std::size_t keep = std::min<std::size_t>(
        layout.prefix_len, static_cast<std::size_t>(std::ceil(budget_frac * static_cast<double>(layout.prefix_len) - 1e-9)));

    TokenSelection sel{bn, hkv, std::vector<std::vector<std::uint32_t>>(bn * hkv)};
    std::uint64_t flops = 0;
    for (std::size_t b = 0; b < bn; ++b) {
        for (std::size_t kvh = 0; kvh < hkv; ++kvh) {
            std::vector<double> score(layout.prefix_len, 0.0);
            for (std::size_t h = kvh * ratio; h < (kvh + 1) * ratio; ++h) {
                const auto w = detail::head_weights(q, cache, layout, b, h, sampled);
                for (std::size_t n = 0; n < sampled.size(); ++n) {
                    for (std::size_t t = 0; t < layout.prefix_len; ++t) score[t] += w[n][t];
                    flops += 2 * d * (layout.kv_limit(sampled[n]) + 1);
                }
            }
            std::vector<std::uint32_t> order(layout.prefix_len);
            std::iota(order.begin(), order.end(), 0u);
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto c) { return score[a] > score[c]; });
            auto& row = sel.rows[b * hkv + kvh];
            row.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
            std::sort(row.begin(), row.end());
            for (std::size_t t = layout.prefix_len; t < layout.total_len(); ++t) row.push_back(static_cast<std::uint32_t>(t));
        }
    }
    ledger.add_score_flops(flops);
    return sel;
}

enum class RankMode { mean, max };

/// Per-KV-token received attention for every (b, h): [B, H_q, L]. mean divides
/// by the chunk length (causally masked entries count as 0); max takes the
/// largest weight from any chunk query.
inline TensorF32 received_attention_ranking(const TensorF32& q, const PagedKVCache& cache, const CausalLayout& layout,
                                            RankMode mode, std::size_t query_stride = 1) {
    detail::check_chunk_inputs(q, cache, layout);
    KVUNION_CHECK(query_stride >= 1, ValidationError, "received_attention_ranking: stride must be >= 1");
    const std::size_t bn = q.dim(0), hq = q.dim(1), l = layout.total_len();
    const auto queries = detail::iota_queries(layout.chunk_len, query_stride);
    TensorF32 out({bn, hq, l});
    for (std::size_t b = 0; b < bn; ++b) {
        for (std::size_t h = 0; h < hq; ++h) {
            const auto w = detail::head_weights(q, cache, layout, b, h, queries);
            auto dst = out.row({b, h});
            for (std::size_t t = 0; t < l; ++t) {
                double acc = 0.0;
                for (const auto& wr : w) acc = mode == RankMode::mean ? acc + wr[t] : std::max<double>(acc, wr[t]);
                dst[t] = static_cast<float>(mode == RankMode::mean ? acc / static_cast<double>(queries.size()) : acc);
            }
        }
    }
    return out;
}

/// Positions ordered by descending score; ties keep the lower position first.
inline std::vector<std::size_t> rank_positions(std::span<const float> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    return order;
}

/// 0-based rank of `pos` under rank_positions(scores).
inline std::size_t rank_of(std::span<const float> scores, std::size_t pos) {
    const auto order = rank_positions(scores);
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), pos) - order.begin());
}

}  // namespace kvunion
