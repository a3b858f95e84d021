#include "msde/parallel.hpp"
#include "msde/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Small-noise multivalued SDEs: simulation, rate functions and LDP checks"};
    app.set_version_flag("--version", std::string(msde::kVersion));
    app.require_subcommand(1);

    msde::RunOptions opts;
    opts.workers = msde::default_workers();
    std::string out;
    std::uint64_t seed = 0;

    for (const auto& name : msde::subcommands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opts.config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (overrides output_dir)");
        sub->add_option("--workers", opts.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", seed, "replace the config seed");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : msde::kExitConfig;
    }
    const auto* chosen = app.get_subcommands().front();
    if (!out.empty()) opts.out_dir = out;
    if (chosen->count("--seed-override") > 0) opts.seed_override = seed;
    return msde::run_subcommand(chosen->get_name(), opts);
}
