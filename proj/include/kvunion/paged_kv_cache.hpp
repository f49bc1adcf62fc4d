// SPDX-License-Identifier: Apache-2.0
//
// KV-head-major paged cache. Logically [B, H_kv, L, D]; physically each
// (batch, kv-head) owns a list of fixed-capacity pages of block_size tokens,
// so a (batch, kv-head, block) triple is one contiguous [valid_len, D] region
// whose address never changes once allocated.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kvunion/attention.hpp"
#include "kvunion/binary_io.hpp"
#include "kvunion/block_table.hpp"
#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/tensor.hpp"

namespace kvunion {

/// Non-owning view of one cache page.
struct PageView {
    std::size_t batch = 0;
    std::size_t kv_head = 0;
    std::size_t block = 0;
    std::size_t valid_len = 0;
    /// Absolute position of the first token in the page.
    std::size_t first_pos = 0;
    std::size_t head_dim = 0;
    std::span<const float> k;
    std::span<const float> v;

    const float* k_token(std::size_t i) const noexcept { return k.data() + i * head_dim; }
    const float* v_token(std::size_t i) const noexcept { return v.data() + i * head_dim; }
};

class PagedKVCache {
public:
    PagedKVCache(std::size_t batch, std::size_t kv_heads, std::size_t head_dim, std::size_t block_size)
        : batch_(batch), kv_heads_(kv_heads), head_dim_(head_dim), block_size_(block_size),
          heads_(batch * kv_heads) {
        KVUNION_CHECK(batch > 0 && kv_heads > 0 && head_dim > 0 && block_size > 0, ShapeError,
                      "paged_kv_cache: all dimensions must be positive");
    }

    std::size_t batch() const noexcept { return batch_; }
    std::size_t kv_heads() const noexcept { return kv_heads_; }
    std::size_t head_dim() const noexcept { return head_dim_; }
    std::size_t block_size() const noexcept { return block_size_; }
    std::size_t length() const noexcept { return length_; }
    std::size_t num_blocks() const noexcept { return (length_ + block_size_ - 1) / block_size_; }

    /// Appends k_chunk, v_chunk ([B, H_kv, C, D]) at positions [L, L + C).
    void append_chunk(const TensorF32& k_chunk, const TensorF32& v_chunk) {
        KVUNION_CHECK(k_chunk.rank() == 4 && k_chunk.shape() == v_chunk.shape(), ShapeError,
                      "append_chunk: k and v must be matching rank-4 tensors");
        KVUNION_CHECK(k_chunk.dim(0) == batch_ && k_chunk.dim(1) == kv_heads_ && k_chunk.dim(3) == head_dim_, ShapeError,
                      "append_chunk: chunk shape " + shape_str(k_chunk.shape()) + " does not match cache");
        const std::size_t c = k_chunk.dim(2);
        KVUNION_CHECK(c > 0, ShapeError, "append_chunk: chunk length must be positive");
        for (std::size_t b = 0; b < batch_; ++b) {
            for (std::size_t h = 0; h < kv_heads_; ++h) {
                auto& pages = heads_[b * kv_heads_ + h];
                for (std::size_t t = 0; t < c; ++t) {
                    const std::size_t pos = length_ + t;
                    const std::size_t blk = pos / block_size_;
                    if (blk == pages.k.size()) {
                        pages.k.emplace_back(block_size_ * head_dim_, 0.0f);
                        pages.v.emplace_back(block_size_ * head_dim_, 0.0f);
                    }
                    const std::size_t off = (pos % block_size_) * head_dim_;
                    auto ks = k_chunk.row({b, h, t});
                    auto vs = v_chunk.row({b, h, t});
                    std::copy(ks.begin(), ks.end(), pages.k[blk].begin() + static_cast<std::ptrdiff_t>(off));
                    std::copy(vs.begin(), vs.end(), pages.v[blk].begin() + static_cast<std::ptrdiff_t>(off));
                }
            }
        }
        length_ += c;
    }

    /// Aliases page (batch, kv_head, block); no payload is moved.
    PageView page_view(std::size_t batch, std::size_t kv_head, std::size_t block) const {
        KVUNION_CHECK(batch < batch_ && kv_head < kv_heads_, IndexError, "page_view: (batch, kv_head) out of range");
        KVUNION_CHECK(block < num_blocks(), IndexError,
                      "page_view: block " + std::to_string(block) + " >= num_blocks " + std::to_string(num_blocks()));
        const auto& pages = heads_[batch * kv_heads_ + kv_head];
        const std::size_t first = block * block_size_;
        const std::size_t valid = std::min(block_size_, length_ - first);
        return {batch,
                kv_head,
                block,
                valid,
                first,
                head_dim_,
                std::span<const float>(pages.k[block]).first(valid * head_dim_),
                std::span<const float>(pages.v[block]).first(valid * head_dim_)};
    }

    const float* k_token(std::size_t b, std::size_t h, std::size_t pos) const { return token(b, h, pos, true); }
    const float* v_token(std::size_t b, std::size_t h, std::size_t pos) const { return token(b, h, pos, false); }

    /// Copies the store out as flat [B, H_kv, L, D] tensors.
    TensorF32 flat_k() const { return flatten(true); }
    TensorF32 flat_v() const { return flatten(false); }

    /// Snapshot record: B, H_kv, L, D, block_size as u64 LE, then k_store and
    /// v_store as float32 LE in [B, H_kv, L, D] order.
    void dump(std::ostream& os) const {
        for (std::uint64_t x : {batch_, kv_heads_, length_, head_dim_, block_size_}) io::write_u64_le(os, x);
        io::write_f32_le(os, flat_k().data());
        io::write_f32_le(os, flat_v().data());
    }

    static PagedKVCache load(std::istream& is) {
        const auto b = io::read_u64_le(is), h = io::read_u64_le(is), l = io::read_u64_le(is),
                   d = io::read_u64_le(is), bs = io::read_u64_le(is);
        PagedKVCache cache(b, h, d, bs);
        const std::size_t n = b * h * l * d;
        auto k = io::read_f32_le(is, n);
        auto v = io::read_f32_le(is, n);
        if (l > 0) cache.append_chunk(TensorF32({b, h, l, d}, std::move(k)), TensorF32({b, h, l, d}, std::move(v)));
        return cache;
    }

private:
    struct HeadPages {
        std::vector<std::vector<float>> k;
        std::vector<std::vector<float>> v;
    };

    const float* token(std::size_t b, std::size_t h, std::size_t pos, bool key) const {
        KVUNION_CHECK(b < batch_ && h < kv_heads_ && pos < length_, IndexError, "paged_kv_cache: token out of range");
        const auto& pages = heads_[b * kv_heads_ + h];
        const auto& page = key ? pages.k[pos / block_size_] : pages.v[pos / block_size_];
        return page.data() + (pos % block_size_) * head_dim_;
    }

    TensorF32 flatten(bool key) const {
        TensorF32 out({batch_, kv_heads_, length_, head_dim_});
        for (std::size_t b = 0; b < batch_; ++b) {
            for (std::size_t h = 0; h < kv_heads_; ++h) {
                for (std::size_t t = 0; t < length_; ++t) {
                    const float* src = token(b, h, t, key);
                    std::copy(src, src + head_dim_, out.row({b, h, t}).begin());
                }
            }
        }
        return out;
    }

    std::size_t batch_;
    std::size_t kv_heads_;
    std::size_t head_dim_;
    std::size_t block_size_;
    std::size_t length_ = 0;
    std::vector<HeadPages> heads_;
};

/// Contiguous copy of selected pages plus the absolute position of every
/// copied token.
struct GatheredKV {
    TensorF32 k;  // [n_tokens, D]
    TensorF32 v;
    std::vector<std::uint32_t> positions;
};

/// Copies the listed blocks of (batch, kv_head) into one buffer, in list order.
inline GatheredKV gather_blocks(const PagedKVCache& cache, std::size_t batch, std::size_t kv_head,
                                std::span<const std::uint32_t> blocks, CostLedger& ledger) {
    std::size_t n_tokens = 0;
    for (auto j : blocks) n_tokens += cache.page_view(batch, kv_head, j).valid_len;
    const std::size_t d = cache.head_dim();
    GatheredKV out{TensorF32({n_tokens, d}), TensorF32({n_tokens, d}), {}};
    out.positions.reserve(n_tokens);
    std::size_t at = 0;
    for (auto j : blocks) {
        const PageView page = cache.page_view(batch, kv_head, j);
        std::copy(page.k.begin(), page.k.end(), out.k.data().begin() + static_cast<std::ptrdiff_t>(at * d));
        std::copy(page.v.begin(), page.v.end(), out.v.data().begin() + static_cast<std::ptrdiff_t>(at * d));
        for (std::size_t t = 0; t < page.valid_len; ++t) out.positions.push_back(static_cast<std::uint32_t>(page.first_pos + t));
        at += page.valid_len;
    }
    ledger.add_kv_bytes_copied(2 * n_tokens * d * kElemBytes);
    return out;
}

/// Copies token-granular selections (absolute positions, list order).
inline GatheredKV gather_tokens(const PagedKVCache& cache, std::size_t batch, std::size_t kv_head,
                                std::span<const std::uint32_t> positions, CostLedger& ledger) {
    const std::size_t d = cache.head_dim();
    GatheredKV out{TensorF32({positions.size(), d}), TensorF32({positions.size(), d}),
                   std::vector<std::uint32_t>(positions.begin(), positions.end())};
    for (std::size_t n = 0; n < positions.size(); ++n) {
        const float* ks = cache.k_token(batch, kv_head, positions[n]);
        const float* vs = cache.v_token(batch, kv_head, positions[n]);
        std::copy(ks, ks + d, out.k.row({n}).begin());
        std::copy(vs, vs + d, out.v.row({n}).begin());
    }
    ledger.add_kv_bytes_copied(2 * positions.size() * d * kElemBytes);
    return out;
}

/// Copy-based baseline: one compacted K/V buffer per table pseudo-row, where
/// row (b, g) reads kv head cfg.kv_head_of_group(g).
inline std::vector<GatheredKV> gather_pages(const PagedKVCache& cache, const KVBlockTable& table, const GQAConfig& cfg,
                                            CostLedger& ledger) {
    KVUNION_CHECK(table.batch() == cache.batch() && table.n_groups() == cfg.n_groups(), ShapeError,
                  "gather_pages: table does not match cache batch or group count");
    KVUNION_CHECK(cfg.num_kv_heads == cache.kv_heads(), ShapeError, "gather_pages: kv head count mismatch");
    std::vector<GatheredKV> rows;
    rows.reserve(table.n_rows());
    for (std::size_t b = 0; b < table.batch(); ++b) {
        for (std::size_t g = 0; g < table.n_groups(); ++g) {
            rows.push_back(gather_blocks(cache, b, cfg.kv_head_of_group(g), table.row(b, g), ledger));
        }
    }
    return rows;
}

}  // namespace kvunion
