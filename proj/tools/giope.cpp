// Command-line driver: simulate / fit / estimate / oracle / ablate.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "giope/harness.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::string data;
    std::string tree;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_data, bool needs_tree,
                bool takes_seed = true) {
    cmd->add_option("--config", args.config, "experiment config JSON")->required();
    cmd->add_option("--out", args.out, "output path")->required();
    if (needs_data) cmd->add_option("--data", args.data, "trajectory JSONL")->required();
    if (needs_tree) cmd->add_option("--tree", args.tree, "tree JSON");
    if (takes_seed)
        cmd->add_option_function<std::uint64_t>(
            "--seed", [&args](std::uint64_t s) { args.seed = s; },
            "master seed (overrides the config)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"treatment-effect subgroup discovery for off-policy evaluation"};
    app.require_subcommand(1);

    CommonArgs sim_args, fit_args, est_args, orc_args, abl_args;
    auto* sim = app.add_subcommand("simulate", "generate a trajectory dataset");
    add_common(sim, sim_args, false, false);
    auto* fit = app.add_subcommand("fit", "learn a treatment-effect tree");
    add_common(fit, fit_args, true, false);
    auto* est = app.add_subcommand("estimate", "per-leaf estimates with bootstrap CIs");
    add_common(est, est_args, true, true);
    est->get_option("--tree")->required();
    auto* orc = app.add_subcommand("oracle", "ground-truth treatment effects");
    add_common(orc, orc_args, false, true);
    auto* abl = app.add_subcommand("ablate", "sweep variants x horizons x seeds");
    add_common(abl, abl_args, false, false, /*takes_seed=*/false); // sweep seeds come from the config

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const auto cfg = giope::load_experiment_config(sim_args.config);
            giope::cmd_simulate(cfg, sim_args.out,
                                giope::resolve_master_seed(cfg, sim_args.seed));
        } else if (fit->parsed()) {
            const auto cfg = giope::load_experiment_config(fit_args.config);
            giope::cmd_fit(fit_args.data, cfg, fit_args.out,
                           giope::resolve_master_seed(cfg, fit_args.seed));
        } else if (est->parsed()) {
            const auto cfg = giope::load_experiment_config(est_args.config);
            giope::cmd_estimate(est_args.data, est_args.tree, cfg, est_args.out,
                                giope::resolve_master_seed(cfg, est_args.seed));
        } else if (orc->parsed()) {
            const auto cfg = giope::load_experiment_config(orc_args.config);
            std::optional<std::string> tree;
            if (!orc_args.tree.empty()) tree = orc_args.tree;
            giope::cmd_oracle(cfg, tree, orc_args.out,
                              giope::resolve_master_seed(cfg, orc_args.seed));
        } else if (abl->parsed()) {
            const auto cfg = giope::load_experiment_config(abl_args.config);
            giope::cmd_ablate(cfg, abl_args.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
