// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kvunion/cli.hpp"

using namespace kvunion;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / (std::string("kvunion_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, const std::string& body) const {
        std::ofstream(file(name)) << body;
        return file(name);
    }

private:
    fs::path path_;
};

json base_config() {
    return json::parse(R"({
        "seed": 5,
        "workload": {"batch": 1, "q_heads": 8, "kv_heads": 1, "head_dim": 16, "total_len": 512, "scale": 2.5},
        "engine": {"chunk_size": 128, "block_size": 32,
                   "scorer": {"kind": "max_threshold", "alpha": 0.1}}
    })");
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    return json::parse(in);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const TempDir& dir, const json& cfg, const std::string& manifest, std::optional<std::string> dump = {}) {
    cli::RunOptions opt;
    opt.config_path = dir.write(manifest + ".cfg.json", cfg.dump());
    opt.manifest_path = dir.file(manifest);
    opt.timestamp = "2000-01-01T00:00:00Z";
    opt.dump_dir = dump;
    std::ostringstream out, err;
    return cli::cmd_run(opt, out, err);
}

std::vector<std::vector<std::string>> tsv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, '\t')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    const auto cfg = cli::parse_config(base_config());
    EXPECT_EQ(cfg.seed, 5u);
    EXPECT_EQ(cfg.workload.seed, 5u);
    EXPECT_EQ(cfg.workload.q_heads, 8u);
    EXPECT_EQ(cfg.engine.chunk_size, 128u);
    EXPECT_EQ(cfg.engine.scorer.kind, ScorerKind::max_threshold);
    EXPECT_FLOAT_EQ(cfg.engine.scorer.alpha, 0.1f);
    EXPECT_EQ(cfg.engine.scorer.block_size, 32u);
    EXPECT_EQ(cfg.engine.union_mode, UnionMode::kv_group);
    EXPECT_EQ(cfg.engine.backend, Backend::zero_copy_paged);
}

TEST(Config, RoundTripsThroughJson) {
    auto j = base_config();
    j["workload"]["kind"] = "planted";
    j["workload"]["needles"] = json::array({{{"q", 300}, {"kv", 10}}});
    j["engine"]["union_mode"] = "sub_kv_group";
    j["engine"]["selector"] = "quoka";
    const auto a = cli::parse_config(j);
    const auto b = cli::parse_config(cli::config_to_json(a));
    EXPECT_EQ(cli::config_to_json(a), cli::config_to_json(b));
    EXPECT_EQ(b.workload.needles, (std::vector<Needle>{{300, 10}}));
    EXPECT_EQ(b.engine.selector, SelectorKind::quoka);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    for (const char* patch : {R"({"colour": 1})", R"({"workload": {"heads": 2}})", R"({"engine": {"scorer": {"beta": 1}}})",
                              R"({"engine": {"backend": "gpu"}})", R"({"engine": {"chunk_size": 0}})",
                              R"({"engine": {"scorer": {"alpha": 2.0}}})", R"({"workload": {"q_heads": 6, "kv_heads": 4}})"}) {
        auto j = base_config();
        j.merge_patch(json::parse(patch));
        EXPECT_ANY_THROW(cli::parse_config(j)) << patch;
    }
}

TEST(RunCommand, ExitCodes) {
    TempDir dir;
    auto j = base_config();
    EXPECT_EQ(run(dir, j, "ok.json"), cli::kExitOk);
    j["engine"]["typo"] = 1;
    EXPECT_EQ(run(dir, j, "bad.json"), cli::kExitConfig);
    cli::RunOptions opt;
    opt.config_path = dir.file("missing.json");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_run(opt, out, err), cli::kExitConfig);
    opt.config_path = dir.write("garbage.json", "{not json");
    EXPECT_EQ(cli::cmd_run(opt, out, err), cli::kExitConfig);
}

TEST(RunCommand, GuardMapsInvariantFailures) {
    std::ostringstream err;
    EXPECT_EQ(cli::guarded(err, [] { throw OpenChunkViolation("closed", 3); }), cli::kExitNumerical);
    EXPECT_NE(err.str().find("chunk 3"), std::string::npos);
    EXPECT_EQ(cli::guarded(err, [] { throw DegenerateRowError("empty"); }), cli::kExitNumerical);
    EXPECT_EQ(cli::guarded(err, [] { throw ConfigError("x"); }), cli::kExitConfig);
}

TEST(RunCommand, ManifestIsDeterministicAndComplete) {
    TempDir dir;
    ASSERT_EQ(run(dir, base_config(), "a.json"), 0);
    ASSERT_EQ(run(dir, base_config(), "b.json"), 0);
    const auto a = read_json(dir.file("a.json")), b = read_json(dir.file("b.json"));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a["schema"], "kvunion.manifest/1");
    EXPECT_EQ(a["timestamp"], "2000-01-01T00:00:00Z");
    EXPECT_EQ(a["seed"], 5);
    EXPECT_EQ(a["chunks"].size(), 4u);
    for (const char* key : {"config", "workload", "sparsity", "cost_summary", "error", "frontier"}) EXPECT_TRUE(a.contains(key)) << key;
    for (const char* key : {"attn_flops", "score_flops", "kv_bytes_copied", "metadata_bytes_built", "ideal_speedup"})
        EXPECT_TRUE(a["cost_summary"].contains(key)) << key;
    std::uint64_t attn = 0;
    for (const auto& c : a["chunks"]) attn += c["cost"]["attn_flops"].get<std::uint64_t>();
    EXPECT_EQ(attn, a["cost_summary"]["attn_flops"].get<std::uint64_t>());
}

TEST(RunCommand, DenseScorerReportsNoSparsityNoError) {
    TempDir dir;
    auto j = base_config();
    j["engine"]["scorer"]["kind"] = "all_dense";
    ASSERT_EQ(run(dir, j, "m.json"), 0);
    const auto m = read_json(dir.file("m.json"));
    for (const char* stage : {"pre_union", "q_union", "subgroup_union", "group_union"}) EXPECT_EQ(m["sparsity"][stage], 0.0);
    EXPECT_LE(m["error"]["max_abs_error"].get<double>(), 1e-5);
    EXPECT_DOUBLE_EQ(m["cost_summary"]["ideal_speedup"].get<double>(), 1.0);
}

TEST(RunCommand, SubgroupStagesAreMonotone) {
    TempDir dir;
    auto j = base_config();
    j["engine"]["union_mode"] = "sub_kv_group";
    ASSERT_EQ(run(dir, j, "m.json"), 0);
    const auto m = read_json(dir.file("m.json"));
    for (const auto& s : {m["sparsity"], m["chunks"][3]["sparsity"]}) {
        EXPECT_GE(s["pre_union"], s["q_union"]);
        EXPECT_GE(s["q_union"], s["subgroup_union"]);
        EXPECT_GE(s["subgroup_union"], s["group_union"]);
    }
    EXPECT_GT(m["sparsity"]["pre_union"], m["sparsity"]["group_union"]);
}

TEST(RunCommand, CopyAndZeroCopyDifferOnlyInBytes) {
    TempDir dir;
    auto j = base_config();
    ASSERT_EQ(run(dir, j, "z.json"), 0);
    j["engine"]["backend"] = "copy_compact";
    ASSERT_EQ(run(dir, j, "c.json"), 0);
    const auto z = read_json(dir.file("z.json")), c = read_json(dir.file("c.json"));
    EXPECT_EQ(z["error"], c["error"]);
    EXPECT_EQ(z["cost_summary"]["attn_flops"], c["cost_summary"]["attn_flops"]);
    EXPECT_EQ(z["cost_summary"]["kv_bytes_copied"], 0);
    EXPECT_GT(c["cost_summary"]["kv_bytes_copied"].get<std::uint64_t>(), 0u);
}

TEST(RunCommand, DumpsMasksAndTables) {
    TempDir dir;
    ASSERT_EQ(run(dir, base_config(), "m.json", dir.file("dump")), 0);
    for (int c = 0; c < 4; ++c) {
        std::ifstream mi(dir.file("dump/mask_chunk" + std::to_string(c) + ".txt"));
        std::ifstream ti(dir.file("dump/table_chunk" + std::to_string(c) + ".txt"));
        ASSERT_TRUE(mi.good() && ti.good());
        const auto mask = BlockMask::parse(mi);
        const auto table = KVBlockTable::parse(ti);
        EXPECT_EQ(mask.heads(), 8u);
        EXPECT_EQ(table.n_rows(), 1u);
        EXPECT_TRUE(mask.chunk_open({static_cast<std::size_t>(c) * 128, 128, 32}));
    }
}

TEST(RunCommand, FixtureInputMatchesGeneratedWorkload) {
    TempDir dir;
    const auto cfg = cli::parse_config(base_config());
    {
        std::ofstream f(dir.file("w.bin"), std::ios::binary);
        save_fixture(f, generate_workload(cfg.workload), 32);
    }
    auto j = base_config();
    j["fixture"] = dir.file("w.bin");
    ASSERT_EQ(run(dir, j, "f.json"), 0);
    ASSERT_EQ(run(dir, base_config(), "g.json"), 0);
    EXPECT_EQ(read_json(dir.file("f.json"))["cost_summary"], read_json(dir.file("g.json"))["cost_summary"]);
    j["engine"]["block_size"] = 64;
    EXPECT_EQ(run(dir, j, "x.json"), cli::kExitConfig);
}

TEST(Sweep, BatchAxisCopyBytesAreLinear) {
    auto j = base_config();
    j["engine"]["backend"] = "copy_compact";
    j["engine"]["scorer"]["kind"] = "all_dense";
    const auto rows = tsv(cli::sweep_table(cli::parse_config(j), "batch", {"1", "2", "4"}));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0][0], "axis");
    EXPECT_EQ(rows[0].size(), 13u);
    const double one = std::stod(rows[1][10]);
    EXPECT_GT(one, 0.0);
    EXPECT_DOUBLE_EQ(std::stod(rows[2][10]), 2 * one);
    EXPECT_DOUBLE_EQ(std::stod(rows[3][10]), 4 * one);
}

TEST(Sweep, ChunkSizeAxisKeepsDenseExact) {
    auto j = base_config();
    j["engine"]["scorer"]["kind"] = "all_dense";
    const auto rows = tsv(cli::sweep_table(cli::parse_config(j), "chunk_size", {"64", "128", "512"}));
    for (std::size_t r = 1; r < rows.size(); ++r) EXPECT_LE(std::stod(rows[r][2]), 1e-5);
}

TEST(Sweep, AlphaAxisIsMonotone) {
    const auto rows = tsv(cli::sweep_table(cli::parse_config(base_config()), "alpha", {"0.5", "0.1", "0.01"}));
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t r = 2; r < rows.size(); ++r) {
        EXPECT_LE(std::stod(rows[r][2]), std::stod(rows[r - 1][2]));
        EXPECT_LE(std::stod(rows[r][3]), std::stod(rows[r - 1][3]));
    }
}

TEST(Sweep, UnionModeAxisAndErrors) {
    const auto cfg = cli::parse_config(base_config());
    const auto rows = tsv(cli::sweep_table(cfg, "union_mode", {"per_head", "sub_kv_group", "kv_group"}));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_LE(std::stod(rows[1][8]), std::stod(rows[2][8]));
    EXPECT_LE(std::stod(rows[2][8]), std::stod(rows[3][8]));
    EXPECT_THROW(cli::sweep_table(cfg, "colour", {"1"}), ConfigError);
    EXPECT_THROW(cli::sweep_table(cfg, "alpha", {"abc"}), ConfigError);
    EXPECT_THROW(cli::sweep_table(cfg, "alpha", {}), ConfigError);
}

TEST(Rank, NeedleIsQuerySpecific) {
    auto j = json::parse(R"({
        "seed": 3,
        "workload": {"batch": 1, "q_heads": 1, "kv_heads": 1, "head_dim": 32, "total_len": 512,
                     "kind": "planted", "boost": 4.9, "needles": [{"q": 301, "kv": 100}]},
        "engine": {"chunk_size": 256, "block_size": 64}
    })");
    const auto report = cli::rank_report(cli::parse_config(j), RankMode::max);
    const auto pos = report.find("# needle\t");
    ASSERT_NE(pos, std::string::npos);
    std::istringstream ls(report.substr(pos + 9));
    std::size_t q, kv, r_mean, r_max, r_sub;
    ls >> q >> kv >> r_mean >> r_max >> r_sub;
    EXPECT_EQ(kv, 100u);
    EXPECT_LT(r_max, 512u / 10);
    EXPECT_GT(r_mean, 512u / 2);
    EXPECT_GT(r_sub, r_mean);
    const auto rows = tsv(report);
    EXPECT_EQ(rows[1][0], "rank");
    EXPECT_EQ(rows[2 + r_max][1], "100");
}

TEST(MaskDiff, ReportsDifferingBits) {
    TempDir dir;
    BlockMask a(1, 2, 2, 3), b(1, 2, 2, 3);
    a.set(0, 0, 0, 1);
    a.set(0, 1, 1, 2);
    b.set(0, 1, 1, 2);
    b.set(0, 1, 0, 0);
    std::ostringstream out;
    EXPECT_EQ(cli::mask_diff(a, b, out), 2u);
    EXPECT_EQ(out.str(), "- 0 0 0 1\n+ 0 1 0 0\n");
    {
        std::ofstream fa(dir.file("a.txt")), fb(dir.file("b.txt"));
        a.dump(fa);
        b.dump(fb);
    }
    std::ostringstream o2, err;
    EXPECT_EQ(cli::cmd_mask_diff(dir.file("a.txt"), dir.file("b.txt"), o2, err), 0);
    EXPECT_NE(o2.str().find("# differing_bits=2"), std::string::npos);
    EXPECT_THROW(cli::mask_diff(a, BlockMask(1, 2, 2, 4), out), ShapeError);
}

TEST(Binary, ExitCodesFromTheExecutable) {
    TempDir dir;
    const std::string exe = KVUNION_CLI_PATH;
    const std::string cfg = dir.write("c.json", base_config().dump());
    auto status = [](const std::string& cmd) {
        const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(rc);
    };
    EXPECT_EQ(status(exe + " run --config " + cfg + " --manifest " + dir.file("m.json")), 0);
    EXPECT_TRUE(fs::exists(dir.file("m.json")));
    auto bad = base_config();
    bad["nope"] = true;
    EXPECT_EQ(status(exe + " run --config " + dir.write("bad.json", bad.dump())), 2);
    EXPECT_EQ(status(exe + " frobnicate"), 2);
    EXPECT_EQ(status(exe + " sweep --config " + cfg + " --axis alpha --values 0.5,0.1 --out " + dir.file("s.tsv")), 0);
    EXPECT_EQ(tsv(slurp(dir.file("s.tsv"))).size(), 3u);
    EXPECT_EQ(status(exe + " sweep --config " + cfg + " --axis colour --values 1"), 2);
    EXPECT_EQ(status(exe + " rank --config " + cfg + " --mode median"), 2);
}
