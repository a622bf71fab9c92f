#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "giope/config.hpp"
#include "giope/csv.hpp"
#include "giope/data.hpp"
#include "giope/envs/sepsis.hpp"
#include "giope/envs/tabular.hpp"
#include "giope/envs/toy.hpp"
#include "giope/inference.hpp"
#include "giope/jsonl.hpp"
#include "giope/tree.hpp"

namespace giope {

/// CLI seed flag > env config seed > first sweep seed.
inline std::uint64_t resolve_master_seed(const ExperimentConfig& cfg,
                                         std::optional<std::uint64_t> cli_seed) {
    if (cli_seed) return *cli_seed;
    if (cfg.env.seed) return *cfg.env.seed;
    return cfg.seeds.front();
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Sidecar with everything needed to reproduce the output byte-for-byte.
inline void write_sidecar(const std::string& out_path, const char* command,
                          const ExperimentConfig& cfg, std::uint64_t master_seed,
                          nlohmann::json extra = nlohmann::json::object()) {
    ExperimentConfig resolved = cfg;
    resolved.env.seed = master_seed;
    nlohmann::json meta;
    meta["command"] = command;
    meta["master_seed"] = master_seed;
    meta["config"] = experiment_config_to_json(resolved);
    meta["extra"] = std::move(extra);
    write_text(out_path + ".meta.json", meta.dump(2) + "\n");
}

inline std::uint64_t fnv1a_dataset(const Dataset& ds) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        __builtin_memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& r : ds.records()) {
        for (double x : r.x) mix(x);
        mix(r.rho);
        mix(r.g);
    }
    return h;
}

struct TabularSetup {
    TabularMDP mdp;
    SepsisPolicies policies;
};

inline TabularSetup make_tabular_setup(const SepsisConfig& cfg) {
    TabularSetup s;
    s.mdp = build_sepsis_mdp(cfg);
    s.policies = make_sepsis_policies(s.mdp, cfg);
    return s;
}

} // namespace detail

/// Generate trajectories for the configured environment.
inline std::vector<Trajectory> run_simulate(const ExperimentConfig& cfg,
                                            std::uint64_t master_seed) {
    const std::uint64_t sim_seed = derive_seed(master_seed, {kSeedSimulate});
    if (cfg.env.kind == EnvConfig::Kind::Toy) return toy_generate(cfg.env.toy.toy, sim_seed);
    const auto setup = detail::make_tabular_setup(cfg.env.tabular);
    return simulate(setup.mdp, setup.policies.behavior, setup.policies.evaluation,
                    cfg.env.tabular.n_trajectories, sim_seed);
}

inline void cmd_simulate(const ExperimentConfig& cfg, const std::string& out,
                         std::uint64_t master_seed) {
    const auto trajs = run_simulate(cfg, master_seed);
    save_jsonl(out, trajs);
    detail::write_sidecar(out, "simulate", cfg, master_seed,
                          {{"n_trajectories", trajs.size()}});
}

struct FitResult {
    Tree tree;
    std::vector<SplitEvent> report;
    double g_inf = 0.0;
    std::size_t n_partition = 0;
    std::size_t n_estimation = 0;
};

/// Partitioning phase: honest split, then greedy tree growth on the
/// partition half. g_inf is the full-dataset max |g| (or the config
/// override) shared by both phases.
inline FitResult run_fit(const Dataset& full, const ExperimentConfig& cfg,
                         std::uint64_t master_seed) {
    FitResult res;
    res.g_inf = cfg.g_inf_override.value_or(full.g_inf());
    auto [part, est] = split_dataset(full, cfg.split_fraction, master_seed);
    res.n_partition = part.size();
    res.n_estimation = est.size();
    res.tree = build_tree(part, cfg.loss, res.g_inf, &res.report);
    return res;
}

inline void cmd_fit(const std::string& data_path, const ExperimentConfig& cfg,
                    const std::string& out, std::uint64_t master_seed) {
    const auto trajs = load_jsonl(data_path);
    const Dataset full = to_records(trajs, cfg.env.gamma());
    const FitResult res = run_fit(full, cfg, master_seed);
    detail::write_text(out, tree_to_json(res.tree));

    nlohmann::json splits = nlohmann::json::array();
    for (const auto& ev : res.report)
        splits.push_back({{"node", ev.node},
                          {"n", ev.n},
                          {"feature", ev.feature},
                          {"threshold", ev.threshold},
                          {"loss_before", ev.loss_before},
                          {"loss_after", ev.loss_after}});
    detail::write_sidecar(out, "fit", cfg, master_seed,
                          {{"data", data_path},
                           {"n_records", full.size()},
                           {"n_partition", res.n_partition},
                           {"n_estimation", res.n_estimation},
                           {"g_inf", res.g_inf},
                           {"leaf_count", res.tree.leaf_count()},
                           {"accepted_splits", splits}});
}

/// Estimation phase on the held-out half.
inline std::vector<GroupEstimate> run_estimate(const Dataset& full, const Tree& tree,
                                               const ExperimentConfig& cfg,
                                               std::uint64_t master_seed) {
    if (full.m() < tree.m())
        throw DimensionMismatch("estimate: data has " + std::to_string(full.m()) +
                                " features, tree needs " + std::to_string(tree.m()));
    const double g_inf = cfg.g_inf_override.value_or(full.g_inf());
    auto [part, est] = split_dataset(full, cfg.split_fraction, master_seed);
    return estimate_groups(tree, est, cfg.bootstrap_B, cfg.ci_level,
                           derive_seed(master_seed, {kSeedEstimate}), g_inf);
}

inline void write_group_report(const std::string& path,
                               std::span<const GroupEstimate> estimates) {
    CsvWriter csv(path);
    csv.row({"leaf", "n", "t_hat", "ci_low", "ci_high", "ess", "v_proxy", "rule"});
    for (const auto& e : estimates) {
        csv.cell(e.leaf).cell(e.n).cell(e.t_hat).cell(e.ci_low).cell(e.ci_high);
        csv.cell(e.ess).cell(e.v_proxy).cell(e.rule);
        csv.end_row();
    }
}

inline void cmd_estimate(const std::string& data_path, const std::string& tree_path,
                         const ExperimentConfig& cfg, const std::string& out,
                         std::uint64_t master_seed) {
    const auto trajs = load_jsonl(data_path);
    const Dataset full = to_records(trajs, cfg.env.gamma());
    const Tree tree = tree_from_json(detail::read_text(tree_path));
    const auto estimates = run_estimate(full, tree, cfg, master_seed);
    write_group_report(out, estimates);

    // Whole-cohort value of the evaluation policy, for context next to the
    // per-group report.
    nlohmann::json extra{{"data", data_path}, {"tree", tree_path},
                         {"n_records", full.size()}};
    try {
        std::vector<double> ratios;
        ratios.reserve(full.size());
        for (const auto& r : full.records()) ratios.push_back(r.rho);
        extra["wis_value"] = wis_value(full.records());
        extra["wis_ess"] = ess(ratios);
    } catch (const DegenerateWeights&) {
        extra["wis_value"] = nullptr;
        extra["wis_ess"] = nullptr;
    }
    detail::write_sidecar(out, "estimate", cfg, master_seed, std::move(extra));
}

/// Ground truth produced by the oracle stage.
struct OracleData {
    std::vector<std::pair<std::vector<double>, double>> test_points; // (x, t_true)
    std::vector<std::pair<int, double>> group_truth;                 // (leaf, T_true)
};

inline OracleData run_oracle(const ExperimentConfig& cfg, const Tree* tree,
                             std::uint64_t master_seed) {
    OracleData out;
    if (cfg.env.kind == EnvConfig::Kind::Tabular) {
        const auto setup = detail::make_tabular_setup(cfg.env.tabular);
        const auto ve = policy_value(setup.mdp, setup.policies.evaluation);
        const auto vb = policy_value(setup.mdp, setup.policies.behavior);

        Rng rng(derive_seed(master_seed, {kSeedOracle, 1}));
        out.test_points.reserve(cfg.env.tabular.n_test);
        for (std::size_t i = 0; i < cfg.env.tabular.n_test; ++i) {
            const std::size_t s = rng.categorical(setup.mdp.initial);
            out.test_points.emplace_back(setup.mdp.features_of(s), ve[s] - vb[s]);
        }
        if (tree) {
            std::map<int, std::vector<std::size_t>> members;
            for (std::size_t s = 0; s < setup.mdp.n_states; ++s) {
                if (!(setup.mdp.initial[s] > 0.0)) continue;
                members[tree->assign_leaf(setup.mdp.features_of(s))].push_back(s);
            }
            for (const auto& [leaf, states] : members)
                out.group_truth.emplace_back(
                    leaf, exact_group_effect(setup.mdp, setup.policies.evaluation,
                                             setup.policies.behavior, states));
        }
        return out;
    }

    // Toy: Monte-Carlo truths on an evenly spaced grid; per-leaf truth from a
    // denser grid averaged within each leaf.
    const auto& toy_cfg = cfg.env.toy;
    const std::size_t P = toy_cfg.n_test_points;
    for (std::size_t i = 0; i < P; ++i) {
        const double x = P > 1 ? static_cast<double>(i) / static_cast<double>(P - 1) : 0.5;
        const double t = toy_oracle(toy_cfg.toy, x, toy_cfg.n_rollouts,
                                    derive_seed(master_seed, {kSeedOracle, 1, i}));
        out.test_points.emplace_back(std::vector<double>{x}, t);
    }
    if (tree) {
        std::map<int, std::pair<double, std::size_t>> acc;
        for (std::size_t j = 0; j < toy_cfg.n_group_grid; ++j) {
            const double x = (static_cast<double>(j) + 0.5) /
                             static_cast<double>(toy_cfg.n_group_grid);
            const double t = toy_oracle(toy_cfg.toy, x, toy_cfg.n_rollouts,
                                        derive_seed(master_seed, {kSeedOracle, 2, j}));
            auto& a = acc[tree->assign_leaf(std::vector<double>{x})];
            a.first += t;
            a.second += 1;
        }
        for (const auto& [leaf, a] : acc)
            out.group_truth.emplace_back(leaf, a.first / static_cast<double>(a.second));
    }
    return out;
}

inline void cmd_oracle(const ExperimentConfig& cfg, std::optional<std::string> tree_path,
                       const std::string& out, std::uint64_t master_seed) {
    std::optional<Tree> tree;
    if (tree_path) tree = tree_from_json(detail::read_text(*tree_path));
    const OracleData data = run_oracle(cfg, tree ? &*tree : nullptr, master_seed);

    const std::size_t m = data.test_points.empty() ? 0 : data.test_points.front().first.size();
    CsvWriter csv(out);
    std::vector<std::string> header;
    for (std::size_t j = 0; j < m; ++j) header.push_back("x" + std::to_string(j));
    header.push_back("t_true");
    if (tree) header.push_back("leaf");
    csv.row(header);
    for (const auto& [x, t] : data.test_points) {
        for (double v : x) csv.cell(v);
        csv.cell(t);
        if (tree) csv.cell(tree->assign_leaf(x));
        csv.end_row();
    }
    if (tree) {
        CsvWriter gcsv(out + ".groups.csv");
        gcsv.row({"leaf", "T_true"});
        for (const auto& [leaf, t] : data.group_truth) {
            gcsv.cell(leaf).cell(t);
            gcsv.end_row();
        }
    }
    detail::write_sidecar(out, "oracle", cfg, master_seed,
                          tree_path ? nlohmann::json{{"tree", *tree_path}}
                                    : nlohmann::json::object());
}

// ---------------------------------------------------------------------------
// Ablation sweep
// ---------------------------------------------------------------------------

struct CellResult {
    Variant variant = Variant::GIOPE;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsReport metrics;
    std::size_t covered = 0; // leaves whose CI contains the truth
    std::uint64_t data_hash = 0;
};

namespace detail {

inline std::string cell_stem(const CellResult& cell) {
    return std::string(variant_name(cell.variant)) + "_h" + std::to_string(cell.horizon) +
           "_s" + std::to_string(cell.seed);
}

struct Aggregate {
    std::size_t n_runs = 0;
    double mean = 0.0, se = 0.0;
};

inline Aggregate aggregate(std::span<const double> values) {
    Aggregate a;
    a.n_runs = values.size();
    if (values.empty()) return a;
    for (double v : values) a.mean += v;
    a.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.se = std::sqrt(ss / static_cast<double>(values.size() - 1) /
                         static_cast<double>(values.size()));
    }
    return a;
}

} // namespace detail

/// Run simulate -> fit -> estimate -> oracle -> metrics over the cross
/// product of variants, horizons and seeds. The three variants share the
/// dataset, split and oracle of their (horizon, seed) cell; only the loss
/// configuration differs. Failed cells are reported and never abort the
/// sweep.
inline std::vector<CellResult> run_ablate(const ExperimentConfig& cfg) {
    std::vector<std::size_t> horizons = cfg.horizons;
    if (horizons.empty()) horizons.push_back(cfg.env.horizon());
    std::vector<Variant> variants = cfg.variants;
    std::sort(variants.begin(), variants.end());

    std::vector<CellResult> cells;
    for (std::size_t h : horizons) {
        for (std::uint64_t seed : cfg.seeds) {
            ExperimentConfig cell_cfg = cfg;
            cell_cfg.env.set_horizon(h);
            const std::uint64_t cell_master = derive_seed(seed, {kSeedCell, h});

            Dataset full;
            OracleData oracle_base; // test points; group truth is per variant
            std::uint64_t data_hash = 0;
            std::string setup_error;
            try {
                const auto trajs = run_simulate(cell_cfg, cell_master);
                full = to_records(trajs, cell_cfg.env.gamma());
                data_hash = detail::fnv1a_dataset(full);
                oracle_base = run_oracle(cell_cfg, nullptr, cell_master);
            } catch (const std::exception& e) {
                setup_error = e.what();
            }

            for (Variant variant : variants) {
                CellResult cell;
                cell.variant = variant;
                cell.horizon = h;
                cell.seed = seed;
                cell.data_hash = data_hash;
                if (!setup_error.empty()) {
                    cell.error = setup_error;
                    cells.push_back(std::move(cell));
                    continue;
                }
                try {
                    ExperimentConfig vcfg = cell_cfg;
                    vcfg.loss = variant_loss(cfg.loss, variant);
                    const FitResult fit = run_fit(full, vcfg, cell_master);
                    const auto estimates = run_estimate(full, fit.tree, vcfg, cell_master);
                    const OracleData truth = run_oracle(vcfg, &fit.tree, cell_master);
                    cell.metrics = compute_metrics(estimates, fit.tree,
                                                   oracle_base.test_points,
                                                   truth.group_truth);
                    cell.covered = static_cast<std::size_t>(std::llround(
                        cell.metrics.coverage * static_cast<double>(cell.metrics.n_groups)));
                    cell.ok = true;
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                cells.push_back(std::move(cell));
            }
        }
    }
    // Deterministic order: variant, horizon, seed.
    std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
        if (a.variant != b.variant) return a.variant < b.variant;
        if (a.horizon != b.horizon) return a.horizon < b.horizon;
        return a.seed < b.seed;
    });
    return cells;
}

inline void write_ablate_outputs(const std::string& outdir,
                                 std::span<const CellResult> cells) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(outdir) / "cells");

    for (const auto& cell : cells) {
        if (!cell.ok) continue;
        CsvWriter csv((fs::path(outdir) / "cells" / (detail::cell_stem(cell) + ".csv")).string());
        csv.row({"individual_mse", "group_mse", "coverage", "mean_ci_width", "n_groups"});
        csv.cell(cell.metrics.individual_mse)
            .cell(cell.metrics.group_mse)
            .cell(cell.metrics.coverage)
            .cell(cell.metrics.mean_ci_width)
            .cell(cell.metrics.n_groups);
        csv.end_row();
    }

    {
        CsvWriter csv((fs::path(outdir) / "cells.csv").string());
        csv.row({"variant", "horizon", "seed", "status", "individual_mse", "group_mse",
                 "coverage", "mean_ci_width", "n_groups", "data_hash", "error"});
        for (const auto& cell : cells) {
            csv.cell(std::string(variant_name(cell.variant)))
                .cell(cell.horizon)
                .cell(static_cast<std::size_t>(cell.seed))
                .cell(std::string(cell.ok ? "ok" : "failed"));
            if (cell.ok) {
                csv.cell(cell.metrics.individual_mse)
                    .cell(cell.metrics.group_mse)
                    .cell(cell.metrics.coverage)
                    .cell(cell.metrics.mean_ci_width)
                    .cell(cell.metrics.n_groups);
            } else {
                for (int i = 0; i < 5; ++i) csv.cell(std::string());
            }
            csv.cell(std::to_string(cell.data_hash)).cell(cell.error);
            csv.end_row();
        }
    }

    // Aggregate over seeds per (variant, horizon). Coverage is reported both
    // as the mean of per-run coverages and pooled over all groups.
    {
        CsvWriter csv((fs::path(outdir) / "aggregate.csv").string());
        csv.row({"variant", "horizon", "n_runs", "individual_mse_mean", "individual_mse_se",
                 "group_mse_mean", "group_mse_se", "coverage_mean", "coverage_se",
                 "coverage_pooled", "mean_ci_width_mean", "mean_ci_width_se",
                 "n_groups_mean", "n_groups_se"});
        std::map<std::pair<int, std::size_t>, std::vector<const CellResult*>> by_key;
        for (const auto& cell : cells)
            if (cell.ok)
                by_key[{static_cast<int>(cell.variant), cell.horizon}].push_back(&cell);
        for (const auto& [key, group] : by_key) {
            std::vector<double> ind, grp, cov, wid, ngr;
            std::size_t covered = 0, total_groups = 0;
            for (const auto* c : group) {
                ind.push_back(c->metrics.individual_mse);
                grp.push_back(c->metrics.group_mse);
                cov.push_back(c->metrics.coverage);
                wid.push_back(c->metrics.mean_ci_width);
                ngr.push_back(static_cast<double>(c->metrics.n_groups));
                covered += c->covered;
                total_groups += c->metrics.n_groups;
            }
            const auto a_ind = detail::aggregate(ind), a_grp = detail::aggregate(grp),
                       a_cov = detail::aggregate(cov), a_wid = detail::aggregate(wid),
                       a_ngr = detail::aggregate(ngr);
            csv.cell(std::string(variant_name(static_cast<Variant>(key.first))))
                .cell(key.second)
                .cell(group.size())
                .cell(a_ind.mean)
                .cell(a_ind.se)
                .cell(a_grp.mean)
                .cell(a_grp.se)
                .cell(a_cov.mean)
                .cell(a_cov.se)
                .cell(total_groups > 0
                          ? static_cast<double>(covered) / static_cast<double>(total_groups)
                          : 0.0)
                .cell(a_wid.mean)
                .cell(a_wid.se)
                .cell(a_ngr.mean)
                .cell(a_ngr.se);
            csv.end_row();
        }
    }
}

inline void cmd_ablate(const ExperimentConfig& cfg, const std::string& outdir) {
    const auto cells = run_ablate(cfg);
    write_ablate_outputs(outdir, cells);
    detail::write_sidecar((std::filesystem::path(outdir) / "ablate").string(), "ablate", cfg,
                          cfg.seeds.front(), {{"n_cells", cells.size()}});
}

} // namespace giope
