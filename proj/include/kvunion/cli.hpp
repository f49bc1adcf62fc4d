// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind tools/kvunion: config parsing, manifests,
// sweeps, rankings and mask diffs. Kept in the library so tests can drive
// them without spawning processes.
//
// Exit codes: 0 success, 2 config error, 3 numerical or invariant failure.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <initializer_list>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kvunion/block_union.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/pattern_search.hpp"
#include "kvunion/prefill_engine.hpp"
#include "kvunion/sparse_exec.hpp"
#include "kvunion/workload.hpp"

namespace kvunion::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct RunConfig {
    std::uint64_t seed = 0;
    WorkloadConfig workload;
    EngineConfig engine;
    std::optional<std::string> fixture;
};

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    KVUNION_CHECK(obj.is_object(), ConfigError, where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items()) {
        KVUNION_CHECK(ok.count(key), ConfigError, where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <typename E>
E parse_enum(const std::string& name, std::initializer_list<std::pair<const char*, E>> table, const std::string& where) {
    for (const auto& [s, e] : table) {
        if (name == s) return e;
    }
    throw ConfigError(where + ": unknown value '" + name + "'");
}

template <typename E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> table) {
    for (const auto& [s, e] : table) {
        if (e == value) return s;
    }
    return "?";
}

inline const std::initializer_list<std::pair<const char*, ScorerKind>> kScorers = {
    {"exact_oracle", ScorerKind::exact_oracle}, {"max_threshold", ScorerKind::max_threshold}, {"all_dense", ScorerKind::all_dense}};
inline const std::initializer_list<std::pair<const char*, UnionMode>> kUnionModes = {
    {"kv_group", UnionMode::kv_group}, {"sub_kv_group", UnionMode::sub_kv_group}, {"per_head", UnionMode::per_head}};
inline const std::initializer_list<std::pair<const char*, Backend>> kBackends = {
    {"zero_copy_paged", Backend::zero_copy_paged},
    {"copy_compact", Backend::copy_compact},
    {"block_sparse_tiles", Backend::block_sparse_tiles}};
inline const std::initializer_list<std::pair<const char*, SelectorKind>> kSelectors = {
    {"block_union", SelectorKind::block_union}, {"quoka", SelectorKind::quoka}};
inline const std::initializer_list<std::pair<const char*, WorkloadKind>> kWorkloadKinds = {
    {"gaussian", WorkloadKind::gaussian}, {"planted", WorkloadKind::planted}};

}  // namespace detail

inline RunConfig parse_config(const json& root) {
    using detail::check_keys;
    using detail::read;
    RunConfig cfg;
    check_keys(root, {"seed", "workload", "engine", "fixture"}, "config");
    read(root, "seed", cfg.seed, "config");
    if (root.contains("fixture")) cfg.fixture = root.at("fixture").get<std::string>();

    if (root.contains("workload")) {
        const json& w = root.at("workload");
        check_keys(w, {"batch", "q_heads", "kv_heads", "head_dim", "total_len", "kind", "scale", "boost", "sink_logit", "needles", "auto_needles"},
                   "workload");
        auto& wc = cfg.workload;
        read(w, "batch", wc.batch, "workload");
        read(w, "q_heads", wc.q_heads, "workload");
        read(w, "kv_heads", wc.kv_heads, "workload");
        read(w, "head_dim", wc.head_dim, "workload");
        read(w, "total_len", wc.total_len, "workload");
        read(w, "scale", wc.scale, "workload");
        read(w, "boost", wc.boost, "workload");
        read(w, "sink_logit", wc.sink_logit, "workload");
        if (w.contains("kind")) wc.kind = detail::parse_enum(w.at("kind").get<std::string>(), detail::kWorkloadKinds, "workload.kind");
        if (w.contains("needles")) {
            for (const auto& n : w.at("needles")) {
                check_keys(n, {"q", "kv"}, "workload.needles[]");
                KVUNION_CHECK(n.contains("q") && n.contains("kv"), ConfigError, "workload.needles[]: q and kv required");
                wc.needles.push_back({n.at("q").get<std::size_t>(), n.at("kv").get<std::size_t>()});
            }
        }
        if (w.contains("auto_needles")) {
            const json& a = w.at("auto_needles");
            check_keys(a, {"count", "query_begin", "avoid_stride"}, "workload.auto_needles");
            read(a, "count", wc.auto_needles.count, "workload.auto_needles");
            read(a, "query_begin", wc.auto_needles.query_begin, "workload.auto_needles");
            read(a, "avoid_stride", wc.auto_needles.avoid_stride, "workload.auto_needles");
        }
    }
    cfg.workload.seed = cfg.seed;

    if (root.contains("engine")) {
        const json& e = root.at("engine");
        check_keys(e, {"chunk_size", "block_size", "scorer", "union_mode", "subgroup_size", "backend", "selector", "quoka",
                       "track_error", "tile_fixed_cost"},
                   "engine");
        auto& ec = cfg.engine;
        read(e, "chunk_size", ec.chunk_size, "engine");
        read(e, "block_size", ec.block_size, "engine");
        read(e, "subgroup_size", ec.subgroup_size, "engine");
        read(e, "track_error", ec.track_error, "engine");
        read(e, "tile_fixed_cost", ec.tile_fixed_cost, "engine");
        if (e.contains("union_mode"))
            ec.union_mode = detail::parse_enum(e.at("union_mode").get<std::string>(), detail::kUnionModes, "engine.union_mode");
        if (e.contains("backend"))
            ec.backend = detail::parse_enum(e.at("backend").get<std::string>(), detail::kBackends, "engine.backend");
        if (e.contains("selector"))
            ec.selector = detail::parse_enum(e.at("selector").get<std::string>(), detail::kSelectors, "engine.selector");
        if (e.contains("scorer")) {
            const json& s = e.at("scorer");
            check_keys(s, {"kind", "alpha", "keep_sink", "keep_local_prefix_block", "pool_queries"}, "engine.scorer");
            if (s.contains("kind"))
                ec.scorer.kind = detail::parse_enum(s.at("kind").get<std::string>(), detail::kScorers, "engine.scorer.kind");
            read(s, "alpha", ec.scorer.alpha, "engine.scorer");
            read(s, "keep_sink", ec.scorer.keep_sink, "engine.scorer");
            read(s, "keep_local_prefix_block", ec.scorer.keep_local_prefix_block, "engine.scorer");
            read(s, "pool_queries", ec.scorer.pool_queries, "engine.scorer");
        }
        if (e.contains("quoka")) {
            const json& qk = e.at("quoka");
            check_keys(qk, {"stride", "budget"}, "engine.quoka");
            read(qk, "stride", ec.quoka_stride, "engine.quoka");
            read(qk, "budget", ec.quoka_budget, "engine.quoka");
        }
    }
    cfg.engine.scorer.block_size = cfg.engine.block_size;
    cfg.workload.validate();
    cfg.engine.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    KVUNION_CHECK(in.good(), ConfigError, "config: cannot open '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    return parse_config(root);
}

inline json config_to_json(const RunConfig& cfg) {
    const auto& w = cfg.workload;
    const auto& e = cfg.engine;
    json needles = json::array();
    for (const auto& n : w.needles) needles.push_back({{"q", n.q_pos}, {"kv", n.kv_pos}});
    json j = {
        {"seed", cfg.seed},
        {"workload",
         {{"batch", w.batch},
          {"q_heads", w.q_heads},
          {"kv_heads", w.kv_heads},
          {"head_dim", w.head_dim},
          {"total_len", w.total_len},
          {"kind", detail::enum_name(w.kind, detail::kWorkloadKinds)},
          {"scale", w.scale},
          {"boost", w.boost},
          {"sink_logit", w.sink_logit},
          {"needles", needles},
          {"auto_needles",
           {{"count", w.auto_needles.count},
            {"query_begin", w.auto_needles.query_begin},
            {"avoid_stride", w.auto_needles.avoid_stride}}}}},
        {"engine",
         {{"chunk_size", e.chunk_size},
          {"block_size", e.block_size},
          {"scorer",
           {{"kind", detail::enum_name(e.scorer.kind, detail::kScorers)},
            {"alpha", e.scorer.alpha},
            {"keep_sink", e.scorer.keep_sink},
            {"keep_local_prefix_block", e.scorer.keep_local_prefix_block},
            {"pool_queries", e.scorer.pool_queries}}},
          {"union_mode", detail::enum_name(e.union_mode, detail::kUnionModes)},
          {"subgroup_size", e.subgroup_size},
          {"backend", detail::enum_name(e.backend, detail::kBackends)},
          {"selector", detail::enum_name(e.selector, detail::kSelectors)},
          {"quoka", {{"stride", e.quoka_stride}, {"budget", e.quoka_budget}}},
          {"track_error", e.track_error},
          {"tile_fixed_cost", e.tile_fixed_cost}}}};
    if (cfg.fixture) j["fixture"] = *cfg.fixture;
    return j;
}

inline Workload make_workload(const RunConfig& cfg) {
    if (!cfg.fixture) return generate_workload(cfg.workload);
    std::ifstream in(*cfg.fixture, std::ios::binary);
    KVUNION_CHECK(in.good(), ConfigError, "config: cannot open fixture '" + *cfg.fixture + "'");
    Fixture f = load_fixture(in);
    KVUNION_CHECK(f.block_size == cfg.engine.block_size, ConfigError, "config: fixture block_size differs from engine.block_size");
    return std::move(f.workload);
}

inline json sparsity_json(const SparsityReport& s) {
    return {{"pre_union", s.pre_union},
            {"q_union", s.q_union},
            {"subgroup_union", s.subgroup_union},
            {"group_union", s.group_union},
            {"counted_slots", s.counted_slots}};
}

inline json counters_json(const CostCounters& c) {
    return {{"attn_flops", c.attn_flops},
            {"score_flops", c.score_flops},
            {"kv_bytes_copied", c.kv_bytes_copied},
            {"metadata_bytes_built", c.metadata_bytes_built},
            {"dense_attn_flops", c.dense_attn_flops},
            {"active_tiles", c.active_tiles}};
}

/// Structured cost record: the ledger counters plus the derived speedup.
inline json cost_summary_json(const CostSummary& s) {
    json j = counters_json(s.counters);
    j["tile_fixed_cost"] = s.tile_fixed_cost;
    j["effective_attn_flops"] = s.effective_attn_flops;
    j["ideal_speedup"] = s.ideal_speedup;
    return j;
}

inline json frontier_json(const FrontierRow& r) {
    return {{"label", r.label},
            {"max_abs_error", r.max_abs_error},
            {"ideal_speedup", r.ideal_speedup},
            {"sparsity", sparsity_json(r.sparsity)},
            {"kv_bytes_copied", r.kv_bytes_copied},
            {"metadata_bytes_built", r.metadata_bytes_built},
            {"attn_flops", r.attn_flops},
            {"score_flops", r.score_flops},
            {"mean_row_tokens", r.mean_row_tokens}};
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline json build_manifest(const RunConfig& cfg, const Workload& w, const PrefillResult& res, const std::string& timestamp) {
    json needles = json::array();
    for (const auto& n : w.needles) needles.push_back({{"q", n.q_pos}, {"kv", n.kv_pos}});
    json chunks = json::array();
    for (const auto& c : res.trace.chunks) {
        chunks.push_back({{"chunk_index", c.chunk_index},
                          {"prefix_len", c.prefix_len},
                          {"chunk_len", c.chunk_len},
                          {"sparsity", sparsity_json(c.sparsity)},
                          {"cost", counters_json(c.cost)},
                          {"max_abs_error", c.max_abs_error},
                          {"mean_row_tokens", c.mean_row_tokens},
                          {"max_row_tokens", c.max_row_tokens}});
    }
    const CostSummary cs = cost_summary(res.trace.totals, cfg.engine.tile_fixed_cost);
    return {{"schema", "kvunion.manifest/1"},
            {"timestamp", timestamp},
            {"config", config_to_json(cfg)},
            {"seed", cfg.seed},
            {"workload", {{"batch", w.batch()},
                          {"q_heads", w.q_heads()},
                          {"kv_heads", w.kv_heads()},
                          {"head_dim", w.head_dim()},
                          {"total_len", w.length()},
                          {"needles", needles}}},
            {"chunks", chunks},
            {"sparsity", sparsity_json(aggregate_sparsity(res.trace.chunks))},
            {"cost_summary", cost_summary_json(cs)},
            {"error", {{"max_abs_error", res.trace.max_abs_error}, {"tracked", cfg.engine.track_error}}},
            {"frontier", json::array({frontier_json(frontier_row("run", res.trace, cfg.engine.tile_fixed_cost))})}};
}

/// Maps library exceptions onto exit codes.
inline int guarded(std::ostream& err, const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const OpenChunkViolation& e) {
        err << "invariant failure at chunk " << e.chunk_index() << ": " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}

struct RunOptions {
    std::string config_path;
    std::string manifest_path = "manifest.json";
    std::optional<std::string> dump_dir;
    std::size_t workers = 1;
    /// Fixed timestamp string, for reproducible manifests in tests.
    std::optional<std::string> timestamp;
};

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_config(opt.config_path);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return guarded(err, [&] {
        const Workload w = make_workload(cfg);
        EngineConfig ec = cfg.engine;
        ec.workers = opt.workers;
        ec.keep_artifacts = opt.dump_dir.has_value();
        const PrefillResult res = run_chunked_prefill(w, ec);
        const json manifest = build_manifest(cfg, w, res, opt.timestamp.value_or(utc_timestamp()));
        std::ofstream mf(opt.manifest_path);
        KVUNION_CHECK(mf.good(), ConfigError, "run: cannot write manifest '" + opt.manifest_path + "'");
        mf << manifest.dump(2) << '\n';
        if (opt.dump_dir) {
            std::filesystem::create_directories(*opt.dump_dir);
            for (std::size_t c = 0; c < res.masks.size(); ++c) {
                std::ofstream mo(std::filesystem::path(*opt.dump_dir) / ("mask_chunk" + std::to_string(c) + ".txt"));
                res.masks[c].dump(mo);
                std::ofstream to(std::filesystem::path(*opt.dump_dir) / ("table_chunk" + std::to_string(c) + ".txt"));
                res.tables[c].dump(to);
            }
        }
        out << "chunks=" << res.trace.chunks.size() << " max_abs_error=" << res.trace.max_abs_error
            << " ideal_speedup=" << cost_summary(res.trace.totals, ec.tile_fixed_cost).ideal_speedup
            << " manifest=" << opt.manifest_path << '\n';
    });
}

inline const char* kSweepHeader =
    "axis\tvalue\tmax_abs_error\tsparsity_pre_union\tsparsity_q_union\tsparsity_subgroup_union\t"
    "sparsity_group_union\tideal_speedup\tattn_flops\tscore_flops\tkv_bytes_copied\tmetadata_bytes_built\t"
    "mean_row_tokens";

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// One frontier row per axis value, tab-delimited with kSweepHeader.
inline std::string sweep_table(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                               std::size_t workers = 1) {
    KVUNION_CHECK(!values.empty(), ConfigError, "sweep: empty value list");
    std::ostringstream os;
    os << kSweepHeader << '\n';
    os << std::setprecision(9);
    for (const auto& value : values) {
        RunConfig cfg = base;
        try {
            if (axis == "alpha") cfg.engine.scorer.alpha = std::stof(value);
            else if (axis == "chunk_size") cfg.engine.chunk_size = std::stoul(value);
            else if (axis == "batch") cfg.workload.batch = std::stoul(value);
            else if (axis == "union_mode")
                cfg.engine.union_mode = detail::parse_enum(value, detail::kUnionModes, "sweep.union_mode");
            else throw ConfigError("sweep: unknown axis '" + axis + "'");
        } catch (const std::logic_error& e) {
            if (dynamic_cast<const ConfigError*>(&e)) throw;
            throw ConfigError("sweep: bad value '" + value + "' for axis " + axis);
        }
        KVUNION_CHECK(!(axis == "batch" && cfg.fixture), ConfigError, "sweep: batch axis needs a generated workload");
        cfg.workload.validate();
        cfg.engine.validate();
        EngineConfig ec = cfg.engine;
        ec.workers = workers;
        const auto res = run_chunked_prefill(make_workload(cfg), ec);
        const FrontierRow r = frontier_row(value, res.trace, ec.tile_fixed_cost);
        os << axis << '\t' << value << '\t' << r.max_abs_error << '\t' << r.sparsity.pre_union << '\t' << r.sparsity.q_union
           << '\t' << r.sparsity.subgroup_union << '\t' << r.sparsity.group_union << '\t' << r.ideal_speedup << '\t'
           << r.attn_flops << '\t' << r.score_flops << '\t' << r.kv_bytes_copied << '\t' << r.metadata_bytes_built << '\t'
           << r.mean_row_tokens << '\n';
    }
    return os.str();
}

struct SweepOptions {
    std::string config_path;
    std::string axis;
    std::string values;
    std::optional<std::string> out_path;
    std::size_t workers = 1;
};

inline int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    std::vector<std::string> values;
    try {
        cfg = load_config(opt.config_path);
        values = split_list(opt.values);
        KVUNION_CHECK(!values.empty(), ConfigError, "sweep: empty value list");
        KVUNION_CHECK(opt.axis == "alpha" || opt.axis == "chunk_size" || opt.axis == "batch" || opt.axis == "union_mode",
                      ConfigError, "sweep: unknown axis '" + opt.axis + "'");
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return guarded(err, [&] {
        const std::string table = sweep_table(cfg, opt.axis, values, opt.workers);
        if (opt.out_path) {
            std::ofstream f(*opt.out_path);
            f << table;
        } else {
            out << table;
        }
    });
}

/// Received-attention report over the final chunk for (batch 0, head 0):
/// ranked positions under the requested mode, then one line per needle with
/// its rank under mean, max and the stride-subsampled mean.
inline std::string rank_report(const RunConfig& cfg, RankMode mode) {
    const Workload w = make_workload(cfg);
    const std::size_t l = w.length(), chunk = std::min(cfg.engine.chunk_size, l);
    const std::size_t start = ((l - 1) / chunk) * chunk;
    const CausalLayout layout{start, l - start, cfg.engine.block_size};
    PagedKVCache cache(w.batch(), w.kv_heads(), w.head_dim(), cfg.engine.block_size);
    cache.append_chunk(w.k, w.v);
    const TensorF32 q = slice_seq(w.q, start, l - start);

    const TensorF32 mean = received_attention_ranking(q, cache, layout, RankMode::mean);
    const TensorF32 max = received_attention_ranking(q, cache, layout, RankMode::max);
    const TensorF32 sub = received_attention_ranking(q, cache, layout, RankMode::mean, cfg.engine.quoka_stride);
    const auto chosen = (mode == RankMode::mean ? mean : max).row({0, 0});

    std::ostringstream os;
    os << std::setprecision(9);
    os << "# mode=" << (mode == RankMode::mean ? "mean" : "max") << " chunk_start=" << start << " chunk_len=" << l - start
       << " kv_len=" << l << " batch=0 head=0\n";
    os << "rank\tkv_pos\tscore\n";
    const auto order = rank_positions(chosen);
    for (std::size_t r = 0; r < order.size(); ++r) os << r << '\t' << order[r] << '\t' << chosen[order[r]] << '\n';
    os << "# needles: q_pos kv_pos rank_mean rank_max rank_subsampled_mean (of " << l << ")\n";
    for (const auto& n : w.needles) {
        if (n.q_pos < start) continue;
        os << "# needle\t" << n.q_pos << '\t' << n.kv_pos << '\t' << rank_of(mean.row({0, 0}), n.kv_pos) << '\t'
           << rank_of(max.row({0, 0}), n.kv_pos) << '\t' << rank_of(sub.row({0, 0}), n.kv_pos) << '\n';
    }
    return os.str();
}

struct RankOptions {
    std::string config_path;
    std::string mode = "max";
    std::optional<std::string> out_path;
};

inline int cmd_rank(const RankOptions& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    RankMode mode = RankMode::max;
    try {
        cfg = load_config(opt.config_path);
        if (opt.mode == "mean") mode = RankMode::mean;
        else KVUNION_CHECK(opt.mode == "max", ConfigError, "rank: mode must be mean or max");
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return guarded(err, [&] {
        const std::string report = rank_report(cfg, mode);
        if (opt.out_path) {
            std::ofstream f(*opt.out_path);
            f << report;
        } else {
            out << report;
        }
    });
}

/// Set bits present in only one of two mask dumps, prefixed "-" (only in a)
/// or "+" (only in b). Returns the number of differing bits.
inline std::size_t mask_diff(const BlockMask& a, const BlockMask& b, std::ostream& out) {
    KVUNION_CHECK(a.same_dims(b), ShapeError, "mask-diff: masks have different dims");
    std::size_t n = 0;
    for (std::size_t x = 0; x < a.batch(); ++x)
        for (std::size_t h = 0; h < a.heads(); ++h)
            for (std::size_t i = 0; i < a.n_qblocks(); ++i)
                for (std::size_t j = 0; j < a.n_kvblocks(); ++j) {
                    const bool in_a = a.get(x, h, i, j), in_b = b.get(x, h, i, j);
                    if (in_a == in_b) continue;
                    out << (in_a ? '-' : '+') << ' ' << x << ' ' << h << ' ' << i << ' ' << j << '\n';
                    ++n;
                }
    return n;
}

inline int cmd_mask_diff(const std::string& path_a, const std::string& path_b, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::ifstream fa(path_a), fb(path_b);
        KVUNION_CHECK(fa.good() && fb.good(), ConfigError, "mask-diff: cannot open inputs");
        const std::size_t n = mask_diff(BlockMask::parse(fa), BlockMask::parse(fb), out);
        out << "# differing_bits=" << n << '\n';
    });
}

}  // namespace kvunion::cli
