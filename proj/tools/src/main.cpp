#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mvlab: numerical lab for controlled McKean-Vlasov SPDEs"};
    app.require_subcommand(1);

    mvlab::cli::RunOptions options;
    std::string config, out;
    std::uint64_t seed = 0;
    int workers = 0;
    for (const auto& name : mvlab::cli::subcommands()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config, "experiment configuration (JSON)")->required();
        sub->add_option("--seed", seed, "master seed; replaces the seed list by seed, seed + 1, ...");
        sub->add_option("--out", out, "output directory (overrides the config's output)");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--strict", options.strict, "stop at the first failed assertion; warnings count as failures");
    }
    CLI11_PARSE(app, argc, argv);

    const CLI::App* sub = app.get_subcommands().front();
    options.config = config;
    if (sub->count("--seed")) options.seed = seed;
    if (sub->count("--out")) options.out = out;
    if (sub->count("--workers")) options.workers = workers;
    return mvlab::cli::run(sub->get_name(), options, std::cout, std::cerr);
}
