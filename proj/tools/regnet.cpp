#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "regnet/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"batch simulator for distributed output regulation and "
                 "synchronization over switching networks"};
    app.require_subcommand(1);

    std::string cfg_ref;
    std::string out_dir;
    std::string gen_out;
    std::uint64_t seed = 0;
    bool allow_violations = false;
    int agents = 0;

    CLI::App* validate = app.add_subcommand(
        "validate", "check a scenario's structural health and print the report");
    validate->add_option("scenario", cfg_ref, "bundled scenario name or config path")
        ->required();
    validate->add_flag("--allow-violations", allow_violations,
                       "exit 0 even when hard checks fail");

    CLI::App* run = app.add_subcommand(
        "run", "simulate a scenario and write trajectory.csv and metrics.txt");
    run->add_option("scenario", cfg_ref, "bundled scenario name or config path")
        ->required();
    run->add_option("--out", out_dir, "output directory")->required();
    CLI::Option* seed_opt =
        run->add_option("--seed", seed, "override the scenario's random seed");
    run->add_flag("--allow-violations", allow_violations,
                  "run even when hard structural checks fail");

    CLI::App* zeros = app.add_subcommand(
        "zeros", "list each agent's transmission zeros and detour radius");
    zeros->add_option("scenario", cfg_ref, "bundled scenario name or config path")
        ->required();

    CLI::App* gen = app.add_subcommand(
        "gen-large", "emit the large regulation scenario config");
    gen->add_option("--agents", agents, "number of agents")->required();
    gen->add_option("--out", gen_out, "output file (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (app.got_subcommand(validate))
        return regnet::cli::cmd_validate(cfg_ref, allow_violations, std::cout, std::cerr);
    if (app.got_subcommand(run)) {
        std::optional<std::uint64_t> seed_override;
        if (seed_opt->count() > 0) seed_override = seed;
        return regnet::cli::cmd_run(cfg_ref, out_dir, seed_override, allow_violations,
                                    std::cout, std::cerr);
    }
    if (app.got_subcommand(zeros))
        return regnet::cli::cmd_zeros(cfg_ref, std::cout, std::cerr);
    return regnet::cli::cmd_gen_large(agents, gen_out, std::cout, std::cerr);
}
