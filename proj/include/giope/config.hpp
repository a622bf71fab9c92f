#pragma once
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "giope/envs/sepsis.hpp"
#include "giope/envs/toy.hpp"
#include "giope/errors.hpp"
#include "giope/loss.hpp"

namespace giope {

enum class Variant { GIOPE, GIOPE_R, GIOPE_RP };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::GIOPE: return "GIOPE";
        case Variant::GIOPE_R: return "GIOPE-R";
        case Variant::GIOPE_RP: return "GIOPE-RP";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& name) {
    if (name == "GIOPE") return Variant::GIOPE;
    if (name == "GIOPE-R") return Variant::GIOPE_R;
    if (name == "GIOPE-RP") return Variant::GIOPE_RP;
    throw SchemaError("unknown variant '" + name + "' in field 'variants'");
}

/// Ablation ladder: the full loss, the loss without regularization, and the
/// loss without regularization using the sample variance.
inline LossConfig variant_loss(LossConfig base, Variant v) {
    switch (v) {
        case Variant::GIOPE:
            base.variance_mode = VarianceMode::Proxy;
            base.reg_mode = RegMode::Margin;
            break;
        case Variant::GIOPE_R:
            base.variance_mode = VarianceMode::Proxy;
            base.reg_mode = RegMode::Off;
            break;
        case Variant::GIOPE_RP:
            base.variance_mode = VarianceMode::Sample;
            base.reg_mode = RegMode::Off;
            break;
    }
    return base;
}

/// Toy environment plus its oracle settings.
struct ToyEnvConfig {
    ToyConfig toy;
    std::size_t n_test_points = 25; // individual-truth grid on [0,1]
    std::size_t n_rollouts = 30;    // rollout pairs per truth point
    std::size_t n_group_grid = 2048; // dense grid for per-leaf truth
};

struct EnvConfig {
    enum class Kind { Toy, Tabular } kind = Kind::Tabular;
    ToyEnvConfig toy;
    SepsisConfig tabular;
    std::optional<std::uint64_t> seed;

    double gamma() const { return kind == Kind::Toy ? toy.toy.gamma : tabular.gamma; }
    std::size_t horizon() const {
        return kind == Kind::Toy ? toy.toy.horizon : tabular.horizon;
    }
    void set_horizon(std::size_t h) {
        if (kind == Kind::Toy)
            toy.toy.horizon = h;
        else
            tabular.horizon = h;
    }
    std::size_t n_trajectories() const {
        return kind == Kind::Toy ? toy.toy.n_trajectories : tabular.n_trajectories;
    }
};

struct ExperimentConfig {
    EnvConfig env;
    LossConfig loss;
    double split_fraction = 0.5;
    std::size_t bootstrap_B = 1000;
    double ci_level = 0.95;
    std::vector<std::uint64_t> seeds{1};
    std::vector<Variant> variants{Variant::GIOPE, Variant::GIOPE_R, Variant::GIOPE_RP};
    std::vector<std::size_t> horizons; // empty = use the env's horizon
    std::optional<double> g_inf_override;
};

namespace detail {

template <typename T>
T get_field(const nlohmann::json& obj, const char* name, T fallback) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError("field '" + std::string(name) + "' has the wrong type");
    }
}

inline void known_keys(const nlohmann::json& obj, std::initializer_list<const char*> keys,
                       const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : keys)
            if (it.key() == k) ok = true;
        if (!ok)
            throw SchemaError(std::string(where) + ": unknown field '" + it.key() + "'");
    }
}

} // namespace detail

inline LossConfig loss_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("field 'loss' must be an object");
    detail::known_keys(j,
                       {"variance_mode", "reg_mode", "C", "alpha", "c", "min_leaf",
                        "max_depth", "max_thresholds", "tol"},
                       "loss");
    LossConfig cfg;
    const std::string vm = detail::get_field<std::string>(j, "variance_mode", "proxy");
    if (vm == "proxy")
        cfg.variance_mode = VarianceMode::Proxy;
    else if (vm == "sample")
        cfg.variance_mode = VarianceMode::Sample;
    else
        throw SchemaError("field 'variance_mode' must be 'proxy' or 'sample'");
    const std::string rm = detail::get_field<std::string>(j, "reg_mode", "margin");
    if (rm == "off")
        cfg.reg_mode = RegMode::Off;
    else if (rm == "margin")
        cfg.reg_mode = RegMode::Margin;
    else if (rm == "ratio")
        cfg.reg_mode = RegMode::Ratio;
    else
        throw SchemaError("field 'reg_mode' must be 'off', 'margin' or 'ratio'");
    cfg.C = detail::get_field<double>(j, "C", cfg.C);
    cfg.alpha = detail::get_field<double>(j, "alpha", cfg.alpha);
    cfg.c = detail::get_field<double>(j, "c", cfg.c);
    cfg.min_leaf = detail::get_field<std::size_t>(j, "min_leaf", cfg.min_leaf);
    if (cfg.min_leaf < 1) throw SchemaError("field 'min_leaf' must be >= 1");
    if (j.contains("max_depth") && !j["max_depth"].is_null())
        cfg.max_depth = detail::get_field<std::size_t>(j, "max_depth", 0);
    cfg.max_thresholds = detail::get_field<std::size_t>(j, "max_thresholds", cfg.max_thresholds);
    cfg.tol = detail::get_field<double>(j, "tol", cfg.tol);
    return cfg;
}

inline nlohmann::json loss_config_to_json(const LossConfig& cfg) {
    nlohmann::json j;
    j["variance_mode"] = cfg.variance_mode == VarianceMode::Proxy ? "proxy" : "sample";
    j["reg_mode"] = cfg.reg_mode == RegMode::Off
                        ? "off"
                        : (cfg.reg_mode == RegMode::Margin ? "margin" : "ratio");
    j["C"] = cfg.C;
    j["alpha"] = cfg.alpha;
    j["c"] = cfg.c;
    j["min_leaf"] = cfg.min_leaf;
    if (cfg.max_depth)
        j["max_depth"] = *cfg.max_depth;
    else
        j["max_depth"] = nullptr;
    j["max_thresholds"] = cfg.max_thresholds;
    j["tol"] = cfg.tol;
    return j;
}

inline EnvConfig env_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("field 'env' must be an object");
    detail::known_keys(j, {"env", "toy", "tabular", "seed"}, "env");
    EnvConfig cfg;
    const std::string kind = detail::get_field<std::string>(j, "env", "");
    if (kind == "toy")
        cfg.kind = EnvConfig::Kind::Toy;
    else if (kind == "tabular")
        cfg.kind = EnvConfig::Kind::Tabular;
    else
        throw SchemaError("field 'env' must be 'toy' or 'tabular'");
    if (j.contains("seed") && !j["seed"].is_null())
        cfg.seed = detail::get_field<std::uint64_t>(j, "seed", 0);

    if (j.contains("toy")) {
        const auto& t = j["toy"];
        detail::known_keys(t,
                           {"kappa", "noise_sd", "horizon", "n", "gamma",
                            "identical_policies", "n_test_points", "n_rollouts",
                            "n_group_grid"},
                           "env.toy");
        cfg.toy.toy.kappa = detail::get_field<double>(t, "kappa", cfg.toy.toy.kappa);
        cfg.toy.toy.noise_sd = detail::get_field<double>(t, "noise_sd", cfg.toy.toy.noise_sd);
        cfg.toy.toy.horizon = detail::get_field<std::size_t>(t, "horizon", cfg.toy.toy.horizon);
        cfg.toy.toy.n_trajectories =
            detail::get_field<std::size_t>(t, "n", cfg.toy.toy.n_trajectories);
        cfg.toy.toy.gamma = detail::get_field<double>(t, "gamma", cfg.toy.toy.gamma);
        cfg.toy.toy.identical_policies =
            detail::get_field<bool>(t, "identical_policies", false);
        cfg.toy.n_test_points =
            detail::get_field<std::size_t>(t, "n_test_points", cfg.toy.n_test_points);
        cfg.toy.n_rollouts = detail::get_field<std::size_t>(t, "n_rollouts", cfg.toy.n_rollouts);
        cfg.toy.n_group_grid =
            detail::get_field<std::size_t>(t, "n_group_grid", cfg.toy.n_group_grid);
    }
    if (j.contains("tabular")) {
        const auto& t = j["tabular"];
        detail::known_keys(t,
                           {"n_levels", "n_vitals", "n_actions", "gamma", "horizon",
                            "soften_eps", "b_shift", "e_shift", "n", "n_test"},
                           "env.tabular");
        auto& s = cfg.tabular;
        s.n_levels = detail::get_field<std::size_t>(t, "n_levels", s.n_levels);
        s.n_vitals = detail::get_field<std::size_t>(t, "n_vitals", s.n_vitals);
        s.n_actions = detail::get_field<std::size_t>(t, "n_actions", s.n_actions);
        s.gamma = detail::get_field<double>(t, "gamma", s.gamma);
        s.horizon = detail::get_field<std::size_t>(t, "horizon", s.horizon);
        s.soften_eps = detail::get_field<double>(t, "soften_eps", s.soften_eps);
        s.n_trajectories = detail::get_field<std::size_t>(t, "n", s.n_trajectories);
        s.n_test = detail::get_field<std::size_t>(t, "n_test", s.n_test);
        for (const char* side : {"b_shift", "e_shift"}) {
            if (!t.contains(side)) continue;
            const auto& sh = t[side];
            detail::known_keys(sh, {"actions", "delta"}, side);
            auto& actions = side[0] == 'b' ? s.b_shift_actions : s.e_shift_actions;
            auto& delta = side[0] == 'b' ? s.b_shift_delta : s.e_shift_delta;
            actions = detail::get_field<std::vector<std::size_t>>(sh, "actions", {});
            delta = detail::get_field<double>(sh, "delta", delta);
        }
    }
    return cfg;
}

inline nlohmann::json env_config_to_json(const EnvConfig& cfg) {
    nlohmann::json j;
    j["env"] = cfg.kind == EnvConfig::Kind::Toy ? "toy" : "tabular";
    if (cfg.seed)
        j["seed"] = *cfg.seed;
    else
        j["seed"] = nullptr;
    j["toy"] = {{"kappa", cfg.toy.toy.kappa},
                {"noise_sd", cfg.toy.toy.noise_sd},
                {"horizon", cfg.toy.toy.horizon},
                {"n", cfg.toy.toy.n_trajectories},
                {"gamma", cfg.toy.toy.gamma},
                {"identical_policies", cfg.toy.toy.identical_policies},
                {"n_test_points", cfg.toy.n_test_points},
                {"n_rollouts", cfg.toy.n_rollouts},
                {"n_group_grid", cfg.toy.n_group_grid}};
    j["tabular"] = {{"n_levels", cfg.tabular.n_levels},
                    {"n_vitals", cfg.tabular.n_vitals},
                    {"n_actions", cfg.tabular.n_actions},
                    {"gamma", cfg.tabular.gamma},
                    {"horizon", cfg.tabular.horizon},
                    {"soften_eps", cfg.tabular.soften_eps},
                    {"b_shift",
                     {{"actions", cfg.tabular.b_shift_actions},
                      {"delta", cfg.tabular.b_shift_delta}}},
                    {"e_shift",
                     {{"actions", cfg.tabular.e_shift_actions},
                      {"delta", cfg.tabular.e_shift_delta}}},
                    {"n", cfg.tabular.n_trajectories},
                    {"n_test", cfg.tabular.n_test}};
    return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("config must be a JSON object");
    detail::known_keys(j,
                       {"env", "loss", "split_fraction", "bootstrap_B", "ci_level", "seeds",
                        "variants", "horizons", "g_inf_override"},
                       "config");
    ExperimentConfig cfg;
    if (!j.contains("env")) throw SchemaError("missing field 'env'");
    cfg.env = env_config_from_json(j["env"]);
    if (j.contains("loss")) cfg.loss = loss_config_from_json(j["loss"]);
    cfg.split_fraction = detail::get_field<double>(j, "split_fraction", cfg.split_fraction);
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
        throw SchemaError("field 'split_fraction' must be in (0,1)");
    cfg.bootstrap_B = detail::get_field<std::size_t>(j, "bootstrap_B", cfg.bootstrap_B);
    cfg.ci_level = detail::get_field<double>(j, "ci_level", cfg.ci_level);
    if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0))
        throw SchemaError("field 'ci_level' must be in (0,1)");
    cfg.seeds = detail::get_field<std::vector<std::uint64_t>>(j, "seeds", cfg.seeds);
    if (cfg.seeds.empty()) throw SchemaError("field 'seeds' must be nonempty");
    if (j.contains("variants")) {
        cfg.variants.clear();
        for (const auto& v : j["variants"]) {
            if (!v.is_string()) throw SchemaError("field 'variants' must hold strings");
            cfg.variants.push_back(variant_from_name(v.get<std::string>()));
        }
        if (cfg.variants.empty()) throw SchemaError("field 'variants' must be nonempty");
    }
    cfg.horizons = detail::get_field<std::vector<std::size_t>>(j, "horizons", {});
    if (j.contains("g_inf_override") && !j["g_inf_override"].is_null())
        cfg.g_inf_override = detail::get_field<double>(j, "g_inf_override", 0.0);
    return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["env"] = env_config_to_json(cfg.env);
    j["loss"] = loss_config_to_json(cfg.loss);
    j["split_fraction"] = cfg.split_fraction;
    j["bootstrap_B"] = cfg.bootstrap_B;
    j["ci_level"] = cfg.ci_level;
    j["seeds"] = cfg.seeds;
    std::vector<std::string> names;
    for (Variant v : cfg.variants) names.emplace_back(variant_name(v));
    j["variants"] = names;
    j["horizons"] = cfg.horizons;
    if (cfg.g_inf_override)
        j["g_inf_override"] = *cfg.g_inf_override;
    else
        j["g_inf_override"] = nullptr;
    return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    return experiment_config_from_json(j);
}

} // namespace giope
