// SPDX-License-Identifier: Apache-2.0
//
// kvunion: run, sweep, rank and mask-diff front end.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kvunion/cli.hpp"

int main(int argc, char** argv) {
    namespace cli = kvunion::cli;
    CLI::App app{"kvunion: chunked-prefill block-union simulator"};
    app.require_subcommand(1);
    std::size_t workers = 1;
    app.add_option("--workers", workers, "Cap on row-level worker threads")->check(CLI::PositiveNumber);

    cli::RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Execute one chunked prefill and write a manifest");
    run_cmd->add_option("--config", run.config_path, "Config JSON")->required();
    run_cmd->add_option("--manifest", run.manifest_path, "Manifest output path");
    run_cmd->add_option("--dump-masks", run.dump_dir, "Directory for per-chunk mask and table dumps");
    run_cmd->add_option("--timestamp", run.timestamp, "Override the manifest timestamp");

    cli::SweepOptions sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Frontier table over one config axis");
    sweep_cmd->add_option("--config", sweep.config_path, "Config JSON")->required();
    sweep_cmd->add_option("--axis", sweep.axis, "alpha | chunk_size | batch | union_mode")->required();
    sweep_cmd->add_option("--values", sweep.values, "Comma-separated axis values")->required();
    sweep_cmd->add_option("--out", sweep.out_path, "Write the table here instead of stdout");

    cli::RankOptions rank;
    auto* rank_cmd = app.add_subcommand("rank", "Received-attention ranking of the final chunk");
    rank_cmd->add_option("--config", rank.config_path, "Config JSON")->required();
    rank_cmd->add_option("--mode", rank.mode, "mean | max");
    rank_cmd->add_option("--out", rank.out_path, "Write the report here instead of stdout");

    std::string mask_a, mask_b;
    auto* diff_cmd = app.add_subcommand("mask-diff", "Bitwise difference of two mask dumps");
    diff_cmd->add_option("a", mask_a, "First mask dump")->required();
    diff_cmd->add_option("b", mask_b, "Second mask dump")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kExitConfig;
    }

    if (*run_cmd) {
        run.workers = workers;
        return cli::cmd_run(run, std::cout, std::cerr);
    }
    if (*sweep_cmd) {
        sweep.workers = workers;
        return cli::cmd_sweep(sweep, std::cout, std::cerr);
    }
    if (*rank_cmd) return cli::cmd_rank(rank, std::cout, std::cerr);
    return cli::cmd_mask_diff(mask_a, mask_b, std::cout, std::cerr);
}
