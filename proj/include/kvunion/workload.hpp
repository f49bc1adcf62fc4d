// SPDX-License-Identifier: Apache-2.0
//
// Synthetic Q/K/V sources and the fixture file format.
//
// Planted workloads reserve the last `needles.size()` head-dim coordinates:
// background Q and K are zero there, needle n puts `boost` on coordinate
// D - 1 - n of its query and makes its key exactly boost * e_{D-1-n}. The
// planted pair then has logit boost^2 / sqrt(D) while every other query sees
// the needle key with logit 0.
//
// A positive `sink_logit` reserves one more coordinate, D - 1 - needles, for
// an attention sink: key 0 becomes a * e_x and every query carries a there,
// with a^2 / sqrt(D) = sink_logit.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kvunion/binary_io.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/tensor.hpp"

namespace kvunion {

struct Needle {
    std::size_t q_pos = 0;
    std::size_t kv_pos = 0;
    bool operator==(const Needle&) const = default;
};

enum class WorkloadKind { gaussian, planted };

/// Automatic needle placement: `count` queries inside [query_begin, total_len)
/// at offsets from query_begin that are not multiples of `avoid_stride`, each
/// paired with a distinct key position in [1, query_begin).
struct AutoNeedles {
    std::size_t count = 0;
    std::size_t query_begin = 0;
    std::size_t avoid_stride = 8;
};

struct WorkloadConfig {
    std::size_t batch = 1;
    std::size_t q_heads = 4;
    std::size_t kv_heads = 1;
    std::size_t head_dim = 32;
    std::size_t total_len = 1024;
    WorkloadKind kind = WorkloadKind::gaussian;
    /// Standard deviation of background Q/K/V entries.
    float scale = 1.0f;
    float boost = 8.0f;
    float sink_logit = 0.0f;
    std::vector<Needle> needles;
    AutoNeedles auto_needles;
    std::uint64_t seed = 0;

    void validate() const {
        KVUNION_CHECK(batch > 0 && q_heads > 0 && kv_heads > 0 && head_dim > 0 && total_len > 0, ConfigError,
                      "workload: dimensions must be positive");
        KVUNION_CHECK(q_heads % kv_heads == 0, ConfigError, "workload: q_heads must be a multiple of kv_heads");
        KVUNION_CHECK(scale > 0.0f, ConfigError, "workload: scale must be positive");
        KVUNION_CHECK(sink_logit >= 0.0f, ConfigError, "workload: sink_logit must be >= 0");
    }
};

struct Workload {
    WorkloadConfig params;
    std::vector<Needle> needles;
    TensorF32 q;  // [B, H_q, L, D]
    TensorF32 k;  // [B, H_kv, L, D]
    TensorF32 v;

    std::size_t batch() const { return q.dim(0); }
    std::size_t q_heads() const { return q.dim(1); }
    std::size_t kv_heads() const { return k.dim(1); }
    std::size_t length() const { return q.dim(2); }
    std::size_t head_dim() const { return q.dim(3); }
};

namespace detail {

inline std::vector<Needle> place_needles(const WorkloadConfig& cfg, std::mt19937_64& rng) {
    const auto& a = cfg.auto_needles;
    std::vector<Needle> out;
    if (a.count == 0) return out;
    KVUNION_CHECK(a.query_begin >= 2 && a.query_begin < cfg.total_len, ConfigError,
                  "workload: auto needles need 2 <= query_begin < total_len");
    KVUNION_CHECK(a.avoid_stride >= 2, ConfigError, "workload: auto needle avoid_stride must be >= 2");
    const std::size_t window = cfg.total_len - a.query_begin;
    KVUNION_CHECK(a.count <= window && a.count < a.query_begin, ConfigError, "workload: too many auto needles");
    std::set<std::size_t> used_kv;
    for (std::size_t n = 0; n < a.count; ++n) {
        const std::size_t seg0 = a.query_begin + n * window / a.count;
        const std::size_t seg1 = a.query_begin + (n + 1) * window / a.count;
        std::vector<std::size_t> cand;
        for (std::size_t p = seg0; p < seg1; ++p) {
            if ((p - a.query_begin) % a.avoid_stride != 0) cand.push_back(p);
        }
        KVUNION_CHECK(!cand.empty(), ConfigError, "workload: needle segment has no unsampled query");
        const std::size_t qp = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
        std::size_t kp = 0;
        do {
            kp = std::uniform_int_distribution<std::size_t>(1, a.query_begin - 1)(rng);
        } while (used_kv.count(kp));
        used_kv.insert(kp);
        out.push_back({qp, kp});
    }
    return out;
}

}  // namespace detail

inline Workload generate_workload(const WorkloadConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::vector<Needle> needles;
    if (cfg.kind == WorkloadKind::planted) {
        needles = cfg.needles;
        auto extra = detail::place_needles(cfg, rng);
        needles.insert(needles.end(), extra.begin(), extra.end());
        for (const auto& n : needles) {
            KVUNION_CHECK(n.q_pos < cfg.total_len && n.kv_pos <= n.q_pos, ConfigError,
                          "workload: needle must satisfy kv_pos <= q_pos < total_len");
            KVUNION_CHECK(cfg.sink_logit == 0.0f || n.kv_pos != 0, ConfigError, "workload: needle kv_pos 0 collides with the sink");
        }
    }
    const bool sink = cfg.sink_logit > 0.0f;
    const std::size_t b_n = cfg.batch, l = cfg.total_len, d = cfg.head_dim;
    const std::size_t reserved = needles.size() + (sink ? 1 : 0);
    KVUNION_CHECK(reserved < d, ConfigError, "workload: needles plus sink must leave a free head_dim coordinate");
    std::normal_distribution<float> normal(0.0f, cfg.scale);
    auto fill = [&](std::size_t heads, bool reserve) {
        TensorF32 t({b_n, heads, l, d});
        auto data = t.data();
        for (std::size_t n = 0; n < data.size(); ++n) {
            const std::size_t x = n % d;
            const float val = normal(rng);
            data[n] = (reserve && x >= d - reserved) ? 0.0f : val;
        }
        return t;
    };
    Workload w{cfg, needles, fill(cfg.q_heads, true), fill(cfg.kv_heads, true), fill(cfg.kv_heads, false)};
    if (sink) {
        const std::size_t x = d - 1 - needles.size();
        const float a = std::sqrt(cfg.sink_logit * std::sqrt(static_cast<float>(d)));
        for (std::size_t b = 0; b < b_n; ++b) {
            for (std::size_t h = 0; h < cfg.q_heads; ++h)
                for (std::size_t p = 0; p < l; ++p) w.q.at({b, h, p, x}) = a;
            for (std::size_t h = 0; h < cfg.kv_heads; ++h) {
                auto key = w.k.row({b, h, 0});
                std::fill(key.begin(), key.end(), 0.0f);
                key[x] = a;
            }
        }
    }
    for (std::size_t n = 0; n < needles.size(); ++n) {
        const std::size_t x = d - 1 - n;
        for (std::size_t b = 0; b < b_n; ++b) {
            for (std::size_t h = 0; h < cfg.q_heads; ++h) w.q.at({b, h, needles[n].q_pos, x}) = cfg.boost;
            for (std::size_t h = 0; h < cfg.kv_heads; ++h) {
                auto key = w.k.row({b, h, needles[n].kv_pos});
                std::fill(key.begin(), key.end(), 0.0f);
                key[x] = cfg.boost;
            }
        }
    }
    return w;
}

/// Rows [start, start + len) of axis 2 of a rank-4 tensor.
inline TensorF32 slice_seq(const TensorF32& t, std::size_t start, std::size_t len) {
    KVUNION_CHECK(t.rank() == 4 && start + len <= t.dim(2), ShapeError, "slice_seq: range out of bounds");
    TensorF32 out({t.dim(0), t.dim(1), len, t.dim(3)});
    for (std::size_t b = 0; b < t.dim(0); ++b)
        for (std::size_t h = 0; h < t.dim(1); ++h)
            for (std::size_t p = 0; p < len; ++p) {
                auto src = t.row({b, h, start + p});
                std::copy(src.begin(), src.end(), out.row({b, h, p}).begin());
            }
    return out;
}

/// Fixture record: the cache snapshot layout (B, H_kv, L, D, block_size as
/// u64 LE; K then V as [B, H_kv, L, D] float32 LE) followed by a Q section
/// (H_q as u64 LE, then Q as [B, H_q, L, D] float32 LE).
inline void save_fixture(std::ostream& os, const Workload& w, std::size_t block_size) {
    for (std::uint64_t x : {w.batch(), w.kv_heads(), w.length(), w.head_dim(), block_size}) io::write_u64_le(os, x);
    io::write_f32_le(os, w.k.data());
    io::write_f32_le(os, w.v.data());
    io::write_u64_le(os, w.q_heads());
    io::write_f32_le(os, w.q.data());
}

struct Fixture {
    Workload workload;
    std::size_t block_size = 0;
};

inline Fixture load_fixture(std::istream& is) {
    const auto b = io::read_u64_le(is), hkv = io::read_u64_le(is), l = io::read_u64_le(is), d = io::read_u64_le(is),
               bs = io::read_u64_le(is);
    KVUNION_CHECK(b > 0 && hkv > 0 && l > 0 && d > 0 && bs > 0, ValidationError, "fixture: zero dimension in header");
    auto k = io::read_f32_le(is, b * hkv * l * d);
    auto v = io::read_f32_le(is, b * hkv * l * d);
    const auto hq = io::read_u64_le(is);
    auto q = io::read_f32_le(is, b * hq * l * d);
    WorkloadConfig p;
    p.batch = b;
    p.q_heads = hq;
    p.kv_heads = hkv;
    p.head_dim = d;
    p.total_len = l;
    p.validate();
    return {Workload{p, {}, TensorF32({b, hq, l, d}, std::move(q)), TensorF32({b, hkv, l, d}, std::move(k)),
                     TensorF32({b, hkv, l, d}, std::move(v))},
            bs};
}

}  // namespace kvunion
