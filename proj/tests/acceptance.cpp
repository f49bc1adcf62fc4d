// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "kvunion/kvunion.hpp"
#include "oracle.hpp"

using namespace kvunion;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Collects the first few failure messages.
struct Checker {
    bool ok = true;
    std::size_t failures = 0;
    std::ostringstream notes;

    void expect(bool cond, const std::string& what) {
        if (cond) return;
        ok = false;
        if (failures++ < 3) notes << what << "; ";
    }
    Outcome done(const std::string& summary) const {
        std::string s = summary;
        if (!ok) s += " | failures=" + std::to_string(failures) + ": " + notes.str();
        return {ok, s};
    }
};

struct Instance {
    CausalLayout layout;
    GQAConfig cfg;
    PagedKVCache cache;
    TensorF32 q, k, v;
};

Instance make_instance(std::mt19937_64& rng, std::size_t b, std::size_t hq, std::size_t hkv, std::size_t egs, std::size_t d,
                       std::size_t prefix, std::size_t chunk, std::size_t bs, float scale = 1.5f) {
    Instance c{CausalLayout{prefix, chunk, bs}, GQAConfig::make(hq, hkv, egs), PagedKVCache(b, hkv, d, bs),
               oracle::random_tensor(rng, {b, hq, chunk, d}, scale), oracle::random_tensor(rng, {b, hkv, prefix + chunk, d}, scale),
               oracle::random_tensor(rng, {b, hkv, prefix + chunk, d})};
    c.cache.append_chunk(c.k, c.v);
    return c;
}

KVBlockTable random_table(std::mt19937_64& rng, const Instance& c, double density) {
    std::bernoulli_distribution coin(density);
    std::vector<std::vector<std::uint32_t>> rows;
    for (std::size_t r = 0; r < c.q.dim(0) * c.cfg.n_groups(); ++r) {
        std::vector<std::uint32_t> row;
        for (std::size_t j = 0; j < c.layout.n_kvblocks(); ++j)
            if (c.layout.is_chunk_block(j) || coin(rng)) row.push_back(static_cast<std::uint32_t>(j));
        rows.push_back(row);
    }
    return KVBlockTable::from_rows(c.q.dim(0), c.cfg.n_groups(), c.layout.n_kvblocks(), rows);
}

BlockMask q_uniform_mask(const Instance& c, const KVBlockTable& t) {
    BlockMask m(c.q.dim(0), c.q.dim(1), c.layout.n_qblocks(), c.layout.n_kvblocks());
    for (std::size_t b = 0; b < m.batch(); ++b)
        for (std::size_t h = 0; h < m.heads(); ++h)
            for (auto j : t.row(b, map_head_to_group(h, c.cfg)))
                for (std::size_t i = 0; i < m.n_qblocks(); ++i)
                    if (c.layout.tile_causal(i, j)) m.set(b, h, i, j);
    return m;
}

TensorF32 head_slice(const TensorF32& t, std::size_t b, std::size_t h) {
    TensorF32 out({t.dim(2), t.dim(3)});
    for (std::size_t p = 0; p < t.dim(2); ++p) {
        auto r = t.row({b, h, p});
        std::copy(r.begin(), r.end(), out.row({p}).begin());
    }
    return out;
}

float max_abs_head(const TensorF32& out, std::size_t b, std::size_t h, const TensorF32& ref) {
    float m = 0.0f;
    for (std::size_t p = 0; p < ref.dim(0); ++p)
        for (std::size_t x = 0; x < ref.dim(1); ++x) m = std::max(m, std::fabs(out.at({b, h, p, x}) - ref.at({p, x})));
    return m;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

// Union correctness and minimality against a triple-loop reference.
Outcome ac1() {
    std::mt19937_64 rng(101);
    Checker c;
    const std::size_t ratios[] = {1, 4, 8};
    std::size_t trials = 0;
    for (; trials < 1000; ++trials) {
        const std::size_t ratio = ratios[trials % 3];
        const std::size_t hkv = 1 + rng() % (32 / ratio >= 4 ? 4 : 32 / ratio);
        const std::size_t hq = hkv * ratio, b = 1 + rng() % 4;
        const std::size_t chunk = 29 + rng() % 4;  // 8 q-blocks of 4
        const CausalLayout layout{96, chunk, 4};     // 24 prefix + 8 chunk kv-blocks
        const auto mask = oracle::random_mask(rng, b, hq, layout, 0.05 + 0.5 * (rng() % 100) / 100.0);
        const auto cfg = GQAConfig::make(hq, hkv);
        const auto table = lower_mask(mask, cfg, layout);
        const auto ref = oracle::table_rows(mask, ratio, layout);
        bool same = table.n_rows() == ref.size();
        for (std::size_t r = 0; same && r < ref.size(); ++r) {
            auto row = table.row(r);
            same = std::vector<std::uint32_t>(row.begin(), row.end()) == ref[r];
        }
        c.expect(same, "table differs from reference at trial " + std::to_string(trials));
        c.expect(check_coverage(table, mask, cfg), "coverage");
        c.expect(check_minimality(table, mask, cfg, layout), "minimality");
    }
    return c.done(std::to_string(trials) + " random masks, ratios {1,4,8}, exact match");
}

// Backend equivalence.
Outcome ac2() {
    std::mt19937_64 rng(102);
    Checker c;
    float worst_oracle = 0.0f, worst_sparse = 0.0f;
    double worst_double = 0.0;
    const std::size_t trials = 200;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t ratio = 1 + trial % 4, hkv = 1 + trial % 2, egs = trial % 5 == 0 ? 1 : ratio;
        const std::size_t bs = 4 + 4 * (trial % 3);
        auto inst = make_instance(rng, 1 + trial % 3, hkv * ratio, hkv, egs, 8 + 8 * (trial % 2), bs * (trial % 7), 3 + trial % 17, bs);
        const auto t = random_table(rng, inst, 0.15 + 0.1 * (trial % 6));
        CostLedger zl, cl, sl;
        const ExecPlan plan{t, inst.layout, inst.cfg};
        const auto z = exec_zero_copy(inst.q, inst.cache, plan, zl);
        const auto y = exec_copy_compact(inst.q, inst.cache, plan, cl);
        const auto s = exec_block_sparse(inst.q, inst.cache, q_uniform_mask(inst, t), inst.layout, sl);
        c.expect(z == y, "zero-copy and copy differ bitwise at trial " + std::to_string(trial));
        worst_sparse = std::max({worst_sparse, max_abs_diff(z, s), max_abs_diff(y, s)});
        for (std::size_t b = 0; b < inst.q.dim(0); ++b)
            for (std::size_t h = 0; h < inst.q.dim(1); ++h) {
                const std::size_t kvh = inst.cfg.kv_head_of(h);
                auto row = t.row(b, map_head_to_group(h, inst.cfg));
                const auto allowed = oracle::expand_blocks({row.begin(), row.end()}, inst.layout);
                const auto ref = masked_dense_attention(head_slice(inst.q, b, h), head_slice(inst.k, b, kvh),
                                                        head_slice(inst.v, b, kvh), inst.layout, allowed);
                worst_oracle = std::max({worst_oracle, max_abs_head(z, b, h, ref), max_abs_head(y, b, h, ref)});
                const auto dref = oracle::attention(oracle::head_rows(inst.q, b, h), oracle::head_rows(inst.k, b, kvh),
                                                    oracle::head_rows(inst.v, b, kvh), inst.layout.prefix_len, allowed);
                worst_double = std::max(worst_double, oracle::max_abs(dref, oracle::head_rows(z, b, h)));
            }
    }
    c.expect(worst_oracle <= 1e-6f, "backend vs masked_dense_attention " + fmt("%.3g", worst_oracle));
    c.expect(worst_double <= 1e-5, "backend vs double-precision oracle " + fmt("%.3g", worst_double));
    c.expect(worst_sparse <= 1e-6f, "block_sparse vs table backends " + fmt("%.3g", worst_sparse));
    return c.done(std::to_string(trials) + " instances, zero-copy == copy bitwise, max err vs masked dense " +
                  fmt("%.2e", worst_oracle) + ", vs double oracle " + fmt("%.2e", worst_double) + ", block-sparse " +
                  fmt("%.2e", worst_sparse));
}

// Chunking transparency under full selection.
Outcome ac3() {
    WorkloadConfig wc;
    wc.batch = 2;
    wc.q_heads = 8;
    wc.kv_heads = 2;
    wc.head_dim = 32;
    wc.total_len = 4096;
    wc.seed = 103;
    const auto w = generate_workload(wc);
    const auto ref = run_one_shot_dense(w);
    Checker c;
    std::string detail;
    for (std::size_t chunk : {512u, 1024u, 2048u}) {
        EngineConfig e;
        e.chunk_size = chunk;
        e.block_size = 64;
        e.scorer.kind = ScorerKind::all_dense;
        e.track_error = false;
        const float err = max_abs_diff(run_chunked_prefill(w, e).outputs, ref);
        c.expect(err <= 1e-5f, "chunk " + std::to_string(chunk) + " err " + fmt("%.3g", err));
        detail += " " + std::to_string(chunk) + ":" + fmt("%.2e", err);
    }
    return c.done("L=4096 D=32 B=2 H_q=8, max err per chunk size" + detail);
}

// Zero-copy guarantee and exact copy bytes.
Outcome ac4() {
    Checker c;
    std::mt19937_64 rng(104);
    for (int trial = 0; trial < 12; ++trial) {
        WorkloadConfig wc;
        wc.batch = 1 + trial % 3;
        wc.q_heads = 8;
        wc.kv_heads = 1 << (trial % 3);
        wc.head_dim = 16;
        wc.total_len = 300 + 37 * trial;
        wc.scale = 2.0f;
        wc.seed = rng();
        EngineConfig e;
        e.chunk_size = 64 + 16 * (trial % 4);
        e.block_size = 32;
        e.scorer.kind = trial % 2 ? ScorerKind::exact_oracle : ScorerKind::max_threshold;
        e.scorer.alpha = 0.1f;
        e.union_mode = static_cast<UnionMode>(trial % 3);
        e.track_error = false;
        const auto res = run_chunked_prefill(generate_workload(wc), e);
        c.expect(res.trace.totals.kv_bytes_copied == 0, "zero-copy run copied bytes");
    }
    auto inst = make_instance(rng, 2, 4, 2, 2, 128, 128, 64, 64);
    const auto t = KVBlockTable::from_rows(2, 2, 3, {{0, 1, 2}, {0, 1, 2}, {0, 1, 2}, {0, 1, 2}});
    CostLedger cl, zl;
    exec_copy_compact(inst.q, inst.cache, ExecPlan{t, inst.layout, inst.cfg}, cl);
    exec_zero_copy(inst.q, inst.cache, ExecPlan{t, inst.layout, inst.cfg}, zl);
    const auto per_row = cl.snapshot().kv_bytes_copied / t.n_rows();
    c.expect(cl.snapshot().kv_bytes_copied == 196608u * t.n_rows(), "copy bytes " + std::to_string(cl.snapshot().kv_bytes_copied));
    c.expect(zl.snapshot().kv_bytes_copied == 0, "zero-copy bytes on 3-block table");
    return c.done("12 engine runs copy 0 bytes; copy backend " + std::to_string(per_row) + " bytes per (batch, kv-head) row");
}

// Sparsity monotonicity through union stages.
Outcome ac5() {
    std::mt19937_64 rng(105);
    Checker c;
    auto check = [&](const BlockMask& m, const GQAConfig& cfg, const CausalLayout& l, const std::string& tag) {
        for (std::size_t sub : {1u, 2u, 4u, 8u}) {
            const auto s = sparsity_stats(m, cfg, l, sub);
            c.expect(s.pre_union >= s.q_union && s.q_union >= s.subgroup_union && s.subgroup_union >= s.group_union,
                     tag + " non-monotone");
        }
    };
    std::size_t n = 0;
    for (; n < 500; ++n) {
        const std::size_t ratio = std::size_t{1} << (n % 4), hkv = 1 + n % 3;
        const CausalLayout l{4 * (n % 20), 5 + n % 28, 4};
        check(oracle::random_mask(rng, 1 + n % 3, hkv * ratio, l, 0.05 * (1 + n % 19)), GQAConfig::make(hkv * ratio, hkv), l, "random");
    }
    const CausalLayout l{256, 64, 16};
    const auto cfg = GQAConfig::make(16, 2);
    BlockMask full = BlockMask::full_causal(1, 16, l), local(1, 16, l.n_qblocks(), l.n_kvblocks()), stripes = local, diag = local;
    for (std::size_t h = 0; h < 16; ++h)
        for (std::size_t i = 0; i < l.n_qblocks(); ++i)
            for (std::size_t j = 0; j < l.n_kvblocks(); ++j) {
                if (!l.tile_causal(i, j)) continue;
                const bool chunk = l.is_chunk_block(j);
                if (chunk || j == 0) local.set(0, h, i, j);
                if (chunk || j % 4 == h % 4) stripes.set(0, h, i, j);
                if (chunk || j == (h + 3 * i) % l.first_chunk_block()) diag.set(0, h, i, j);
            }
    check(full, cfg, l, "full");
    check(local, cfg, l, "sink+local");
    check(stripes, cfg, l, "head stripes");
    check(diag, cfg, l, "query-specific diagonal");
    const auto s = sparsity_stats(diag, cfg, l);
    return c.done(std::to_string(n) + " random + 4 structured masks; diagonal example pre/q/sub/group = " + fmt("%.3f", s.pre_union) +
                  "/" + fmt("%.3f", s.q_union) + "/" + fmt("%.3f", s.subgroup_union) + "/" + fmt("%.3f", s.group_union));
}

// Threshold monotonicity.
Outcome ac6() {
    std::mt19937_64 rng(106);
    Checker c;
    const float alphas[] = {0.001f, 0.01f, 0.06f, 0.2f, 0.5f, 1.0f};
    std::size_t instances = 0;
    for (; instances < 100; ++instances) {
        auto inst = make_instance(rng, 1 + instances % 2, 4, 1, 4, 16, 16 * (1 + instances % 8), 17 + instances % 40, 16,
                                  1.0f + 0.5f * static_cast<float>(instances % 5));
        ScorerConfig sc;
        sc.block_size = 16;
        sc.kind = instances % 2 ? ScorerKind::exact_oracle : ScorerKind::max_threshold;
        CostLedger ledger;
        const auto scores = sc.kind == ScorerKind::exact_oracle
                                ? score_blocks_exact(inst.q, inst.cache, inst.layout, sc)
                                : score_blocks_max_threshold(inst.q, inst.cache, inst.layout, sc, ledger);
        std::optional<BlockMask> prev;
        double prev_sparsity = -1.0;
        for (float a : alphas) {
            sc.alpha = a;
            const auto m = threshold_mask(scores, sc, inst.layout);
            if (prev) c.expect(prev->contains(m), "mask(alpha) not nested at instance " + std::to_string(instances));
            const double s = sparsity_stats(m, GQAConfig::make(4, 1), inst.layout).pre_union;
            c.expect(s >= prev_sparsity, "sparsity decreased with alpha");
            prev_sparsity = s;
            prev = m;
        }
    }
    // Engine sweep: error and sparsity along decreasing alpha.
    std::size_t sweeps = 0, error_violations = 0;
    for (std::uint64_t seed = 0; seed < 6; ++seed, ++sweeps) {
        WorkloadConfig wc;
        wc.batch = 1;
        wc.q_heads = 4;
        wc.kv_heads = 1;
        wc.head_dim = 16;
        wc.total_len = 768;
        wc.scale = 1.5f + 0.25f * static_cast<float>(seed);
        wc.seed = 600 + seed;
        const auto w = generate_workload(wc);
        double prev_err = INFINITY, prev_s = 2.0;
        for (float a : {1.0f, 0.5f, 0.2f, 0.06f, 0.01f, 0.001f}) {
            EngineConfig e;
            e.chunk_size = 256;
            e.block_size = 32;
            e.scorer.alpha = a;
            const auto res = run_chunked_prefill(w, e);
            const double s = aggregate_sparsity(res.trace.chunks).pre_union;
            c.expect(s <= prev_s, "engine sparsity increased as alpha fell");
            if (res.trace.max_abs_error > prev_err) ++error_violations;
            c.expect(res.trace.max_abs_error <= prev_err,
                     "error rose as alpha fell (seed " + std::to_string(seed) + ", alpha " + fmt("%g", a) + ")");
            prev_err = res.trace.max_abs_error;
            prev_s = s;
        }
    }
    return c.done(std::to_string(instances) + " instances nested over 6 alphas; " + std::to_string(sweeps) +
                  " engine sweeps, error-order violations " + std::to_string(error_violations));
}

// Coverage failure of the query-subsampled baseline.
Outcome ac7() {
    WorkloadConfig wc;
    wc.batch = 1;
    wc.q_heads = 4;
    wc.kv_heads = 1;
    wc.head_dim = 32;
    wc.total_len = 4096 + 256;
    wc.kind = WorkloadKind::planted;
    wc.boost = 8.0f;
    wc.sink_logit = 9.0f;
    wc.auto_needles = {8, 4096, 8};
    wc.seed = 107;
    const auto w = generate_workload(wc);
    const CausalLayout layout{4096, 256, 64};
    PagedKVCache cache(1, 1, 32, 64);
    cache.append_chunk(w.k, w.v);
    const auto q = slice_seq(w.q, 4096, 256);

    CostLedger ledger;
    const auto sel = quoka_select(q, cache, layout, 8, 0.25, ledger);
    const auto& kept = sel.row(0, 0);
    const std::set<std::uint32_t> kept_set(kept.begin(), kept.end());

    ScorerConfig sc;
    sc.kind = ScorerKind::max_threshold;
    sc.alpha = 0.06f;
    sc.block_size = 64;
    const auto mask = search_pattern(q, cache, layout, sc, ledger);
    const auto table = lower_mask(mask, GQAConfig::make(4, 1), layout);
    auto row = table.row(0, 0);
    const std::set<std::uint32_t> blocks(row.begin(), row.end());
    std::size_t union_tokens = 0;
    for (auto j : row) {
        auto [t0, t1] = layout.kvblock_range(j);
        union_tokens += t1 - t0;
    }

    Checker c;
    std::size_t missed = 0, retained = 0;
    for (const auto& n : w.needles) {
        c.expect((n.q_pos - 4096) % 8 != 0, "needle on a sampled query");
        if (!kept_set.count(static_cast<std::uint32_t>(n.kv_pos))) ++missed;
        if (blocks.count(static_cast<std::uint32_t>(n.kv_pos / 64))) ++retained;
    }
    c.expect(w.needles.size() >= 8, "fewer than 8 needles");
    c.expect(2 * missed >= w.needles.size(), "baseline missed only " + std::to_string(missed));
    c.expect(retained == w.needles.size(), "union retained " + std::to_string(retained));
    c.expect(union_tokens <= kept.size(), "union keeps more tokens than baseline");

    const auto again = quoka_select(q, cache, layout, 8, 0.25, ledger);
    c.expect(again.rows == sel.rows, "baseline not deterministic");
    return c.done(std::to_string(w.needles.size()) + " needles: baseline at 25% keeps " + std::to_string(kept.size()) +
                  " tokens and misses " + std::to_string(missed) + "; union keeps " + std::to_string(union_tokens) +
                  " tokens and retains " + std::to_string(retained));
}

// Batch scaling of copy bytes against zero-copy metadata.
Outcome ac8() {
    Checker c;
    std::mt19937_64 rng(108);
    const CausalLayout layout{127 * 64, 64, 64};
    std::uint64_t base = 0, copy16 = 0, meta16 = 0, prev_meta = 0;
    for (std::size_t b : {1u, 2u, 4u, 8u, 16u}) {
        auto inst = make_instance(rng, b, 1, 1, 1, 128, layout.prefix_len, layout.chunk_len, 64);
        const auto mask = BlockMask::full_causal(b, 1, layout);
        CostLedger zl, cl;
        const auto table = lower_mask(mask, inst.cfg, layout, &zl);
        c.expect(table.row(0, 0).size() == 128, "expected 128 selected blocks");
        const ExecPlan plan{table, layout, inst.cfg};
        exec_zero_copy(inst.q, inst.cache, plan, zl);
        exec_copy_compact(inst.q, inst.cache, plan, cl);
        const auto copied = cl.snapshot().kv_bytes_copied, meta = zl.snapshot().metadata_bytes_built;
        if (b == 1) base = copied;
        c.expect(copied == b * base, "copy bytes not linear at B=" + std::to_string(b));
        c.expect(zl.snapshot().kv_bytes_copied == 0, "zero-copy copied bytes");
        c.expect(meta > prev_meta, "metadata did not grow with B");
        prev_meta = meta;
        if (b == 16) {
            copy16 = copied;
            meta16 = meta;
        }
    }
    const double ratio = static_cast<double>(meta16) / static_cast<double>(copy16);
    c.expect(ratio < 0.05, "metadata ratio " + fmt("%.4f", ratio));
    return c.done("copy bytes B=1 " + std::to_string(base) + ", B=16 " + std::to_string(copy16) + "; metadata at B=16 " +
                  std::to_string(meta16) + " bytes (" + fmt("%.5f", 100.0 * ratio) + "% of copy)");
}

// Causal safety: perturbing tokens beyond a query's horizon leaves that row unchanged.
Outcome ac9() {
    std::mt19937_64 rng(109);
    std::normal_distribution<float> noise(0.0f, 10.0f);
    Checker c;
    std::size_t instances = 0, rows_checked = 0;
    for (; instances < 60; ++instances) {
        const std::size_t bs = 4 + 4 * (instances % 2), d = 8;
        auto inst = make_instance(rng, 1 + instances % 2, 4, 2, instances % 3 == 0 ? 1 : 2, d, bs * (instances % 5),
                                  4 + instances % 13, bs);
        const auto t = random_table(rng, inst, 0.5);
        const auto qm = q_uniform_mask(inst, t);
        const ExecPlan plan{t, inst.layout, inst.cfg};
        const std::size_t p = rng() % inst.layout.chunk_len;
        auto k2 = inst.k, v2 = inst.v;
        for (std::size_t b = 0; b < k2.dim(0); ++b)
            for (std::size_t h = 0; h < k2.dim(1); ++h)
                for (std::size_t pos = inst.layout.kv_limit(p) + 1; pos < inst.layout.total_len(); ++pos)
                    for (std::size_t x = 0; x < d; ++x) {
                        k2.at({b, h, pos, x}) += noise(rng);
                        v2.at({b, h, pos, x}) += noise(rng);
                    }
        PagedKVCache cache2(inst.q.dim(0), 2, d, bs);
        cache2.append_chunk(k2, v2);
        CostLedger ledger;
        const std::pair<TensorF32, TensorF32> outs[] = {
            {exec_zero_copy(inst.q, inst.cache, plan, ledger), exec_zero_copy(inst.q, cache2, plan, ledger)},
            {exec_copy_compact(inst.q, inst.cache, plan, ledger), exec_copy_compact(inst.q, cache2, plan, ledger)},
            {exec_block_sparse(inst.q, inst.cache, qm, inst.layout, ledger), exec_block_sparse(inst.q, cache2, qm, inst.layout, ledger)},
        };
        for (const auto& [a, b2] : outs)
            for (std::size_t b = 0; b < a.dim(0); ++b)
                for (std::size_t h = 0; h < a.dim(1); ++h)
                    for (std::size_t row = 0; row <= p; ++row, ++rows_checked)
                        for (std::size_t x = 0; x < d; ++x)
                            c.expect(a.at({b, h, row, x}) == b2.at({b, h, row, x}), "row changed at instance " + std::to_string(instances));
    }
    return c.done(std::to_string(instances) + " instances, 3 backends, " + std::to_string(rows_checked) + " rows with delta 0");
}

// Ideal-speedup accounting at a 90%-sparse q-uniform mask.
Outcome ac10() {
    std::mt19937_64 rng(110);
    auto inst = make_instance(rng, 1, 1, 1, 1, 8, 640 * 64, 64, 64);
    BlockMask m(1, 1, 1, inst.layout.n_kvblocks());
    for (std::size_t j = 0; j < 640; j += 10) m.set(0, 0, 0, j);
    m.set(0, 0, 0, 640);
    CostLedger ledger;
    exec_block_sparse(inst.q, inst.cache, m, inst.layout, ledger);
    const auto t = lower_mask(m, inst.cfg, inst.layout);
    CostLedger zl;
    exec_zero_copy(inst.q, inst.cache, ExecPlan{t, inst.layout, inst.cfg}, zl);
    const double s = cost_summary(ledger).ideal_speedup, sz = cost_summary(zl).ideal_speedup;
    const double sparsity = sparsity_stats(m, inst.cfg, inst.layout).pre_union;
    Checker c;
    c.expect(std::fabs(sparsity - 0.9) < 1e-12, "mask sparsity " + fmt("%.4f", sparsity));
    c.expect(std::fabs(s - 10.0) <= 0.2, "block-sparse speedup " + fmt("%.4f", s));
    c.expect(std::fabs(sz - 10.0) <= 0.2, "zero-copy speedup " + fmt("%.4f", sz));
    return c.done("sparsity " + fmt("%.3f", sparsity) + ", ideal speedup block-sparse " + fmt("%.3f", s) + ", zero-copy " +
                  fmt("%.3f", sz));
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"AC1 union correctness and minimality", ac1}, {"AC2 backend equivalence", ac2},
        {"AC3 chunking transparency", ac3},            {"AC4 zero-copy guarantee", ac4},
        {"AC5 union-stage sparsity monotonicity", ac5}, {"AC6 alpha monotonicity", ac6},
        {"AC7 subsampled-baseline coverage failure", ac7}, {"AC8 batch scaling of copy bytes", ac8},
        {"AC9 causal safety", ac9},                    {"AC10 ideal speedup accounting", ac10},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
    return failed == 0 ? 0 : 1;
}
