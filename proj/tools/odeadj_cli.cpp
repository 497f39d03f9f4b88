#include <iostream>

#include "CLI11.hpp"
#include "odeadj/harness/commands.hpp"

namespace h = odeadj::harness;

int main(int argc, char** argv) {
    CLI::App app{"Adaptive Dormand-Prince solver with adjoint gradients and (semi)norm error control"};
    app.require_subcommand(1);

    h::CommandOptions opts;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "Experiment config (JSON)")->required();
        sub->add_option("--out", opts.out_dir, "Output directory")->default_val(".");
        sub->add_option("--parallel", opts.parallel, "Worker threads for independent cells")
            ->default_val(1)
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", seed, "Replace the config's seed list with this seed");
    };

    auto* solve = app.add_subcommand("solve", "Forward solve; writes terminal state and step log");
    auto* gradcheck = app.add_subcommand("gradcheck", "Adjoint vs finite-difference gradients");
    auto* bench = app.add_subcommand("bench", "Backward NFE / rejection benchmark across norms");
    auto* train = app.add_subcommand("train", "Toy trajectory-fitting run under each norm");
    for (auto* sub : {solve, gradcheck, bench, train}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? h::kExitOk : h::kExitUsage;
    }
    for (auto* sub : {solve, gradcheck, bench, train})
        if (sub->count("--seed-override")) opts.seed_override = seed;

    if (*solve) return h::cmd_solve(opts, std::cout, std::cerr);
    if (*gradcheck) return h::cmd_gradcheck(opts, std::cout, std::cerr);
    if (*bench) return h::cmd_bench(opts, std::cout, std::cerr);
    return h::cmd_train(opts, std::cout, std::cerr);
}
