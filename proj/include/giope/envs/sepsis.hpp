#pragma once
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "giope/envs/tabular.hpp"
#include "giope/errors.hpp"

namespace giope {

/// Desk-scale ICU-style surrogate. Patients carry n_vitals discrete vitals
/// (levels 0..n_levels-1, middle level is normal) and a binary chronic flag.
/// Each binary treatment targets one vital and pushes it toward normal;
/// treatment 1 backfires on flagged patients, which is where the
/// heterogeneous response lives. Entering the all-normal zone discharges
/// (+1), stacking extreme vitals kills (-1).
struct SepsisConfig {
    std::size_t n_levels = 3;
    std::size_t n_vitals = 4;
    std::size_t n_actions = 8; // power of two: one bit per treatment
    double gamma = 0.99;
    std::size_t horizon = 8;
    double soften_eps = 0.1;
    std::vector<std::size_t> b_shift_actions; // empty = all actions using the last treatment bit
    double b_shift_delta = 0.15;
    std::vector<std::size_t> e_shift_actions; // empty = all actions using treatment bit 1
    double e_shift_delta = 0.20;
    std::size_t n_trajectories = 10000;
    std::size_t n_test = 2000;

    std::size_t n_treatments() const {
        std::size_t bits = 0, a = n_actions;
        while (a > 1) {
            a >>= 1;
            ++bits;
        }
        return bits;
    }
};

namespace sepsis {

// Dynamics constants.
inline constexpr double kTreatToward = 0.40;  // treated vital moves toward normal
inline constexpr double kTreatAway = 0.05;    // treatment side effect
inline constexpr double kHarmAway = 0.35;     // treatment 1 on flagged patients
inline constexpr double kHarmToward = 0.05;
inline constexpr double kDriftAway = 0.12;    // untreated deterioration
inline constexpr double kDriftAwayFlagged = 0.24; // last vital is unstable when flagged
inline constexpr double kDriftToward = 0.05;  // spontaneous recovery
inline constexpr double kDischarge = 0.5;     // all vitals normal
inline constexpr double kDeathByExtremes[] = {0.0, 0.01, 0.08, 0.30, 0.50};
inline constexpr std::size_t kHarmfulTreatment = 1;

inline double death_prob(std::size_t extremes) {
    return kDeathByExtremes[extremes < 4 ? extremes : 4];
}

} // namespace sepsis

namespace detail {

struct SepsisLayout {
    std::size_t levels, vitals, body, n_states;
    std::size_t death, discharge;
    std::size_t normal;

    explicit SepsisLayout(const SepsisConfig& cfg)
        : levels(cfg.n_levels), vitals(cfg.n_vitals) {
        std::size_t combos = 1;
        for (std::size_t j = 0; j < vitals; ++j) combos *= levels;
        body = 2 * combos;
        n_states = body + 2;
        death = body;
        discharge = body + 1;
        normal = (levels - 1) / 2;
    }

    std::size_t index(const std::vector<std::size_t>& v, std::size_t flag) const {
        std::size_t idx = 0, mul = 1;
        for (std::size_t j = 0; j < vitals; ++j) {
            idx += v[j] * mul;
            mul *= levels;
        }
        return flag * mul + idx;
    }
    void decode(std::size_t s, std::vector<std::size_t>& v, std::size_t& flag) const {
        std::size_t combos = body / 2;
        flag = s / combos;
        std::size_t rest = s % combos;
        v.resize(vitals);
        for (std::size_t j = 0; j < vitals; ++j) {
            v[j] = rest % levels;
            rest /= levels;
        }
    }
    bool is_extreme(std::size_t level) const { return level == 0 || level == levels - 1; }
};

// Distribution of one vital's next level under the given treatment status.
inline void vital_step_probs(const SepsisLayout& lay, std::size_t level, bool treated,
                             bool harmful, bool unstable, double out[3]) {
    // out = {down, stay, up} relative moves, clamped at the edges.
    double toward, away;
    if (treated) {
        toward = harmful ? sepsis::kHarmToward : sepsis::kTreatToward;
        away = harmful ? sepsis::kHarmAway : sepsis::kTreatAway;
    } else {
        toward = sepsis::kDriftToward;
        away = unstable ? sepsis::kDriftAwayFlagged : sepsis::kDriftAway;
    }
    double down = 0.0, up = 0.0;
    if (level < lay.normal) {
        up += toward;
        if (level > 0) down += away;
    } else if (level > lay.normal) {
        down += toward;
        if (level < lay.levels - 1) up += away;
    } else {
        if (level > 0) down += away / 2.0;
        if (level < lay.levels - 1) up += away / 2.0;
    }
    out[0] = down;
    out[1] = 1.0 - down - up;
    out[2] = up;
}

} // namespace detail

/// Build the surrogate MDP. States are encoded as feature vectors
/// [vital_0, ..., vital_{V-1}, flag] of small integers, so axis-aligned
/// thresholds express rules like "vital_2 high" or "flagged".
inline TabularMDP build_sepsis_mdp(const SepsisConfig& cfg) {
    if (cfg.n_levels < 2) throw Error("sepsis: n_levels must be >= 2");
    if (cfg.n_vitals < 1) throw Error("sepsis: n_vitals must be >= 1");
    if (cfg.n_actions < 2 || (cfg.n_actions & (cfg.n_actions - 1)) != 0)
        throw Error("sepsis: n_actions must be a power of two >= 2");

    const detail::SepsisLayout lay(cfg);
    TabularMDP mdp;
    mdp.n_states = lay.n_states;
    mdp.n_actions = cfg.n_actions;
    mdp.horizon = cfg.horizon;
    mdp.gamma = cfg.gamma;
    mdp.transition.assign(mdp.n_states * mdp.n_actions * mdp.n_states, 0.0);
    mdp.reward.assign(mdp.n_states, 0.0);
    mdp.reward[lay.death] = -1.0;
    mdp.reward[lay.discharge] = 1.0;
    mdp.terminal.assign(mdp.n_states, 0);
    mdp.terminal[lay.death] = 1;
    mdp.terminal[lay.discharge] = 1;
    mdp.initial.assign(mdp.n_states, 0.0);
    for (std::size_t s = 0; s < lay.body; ++s)
        mdp.initial[s] = 1.0 / static_cast<double>(lay.body);

    mdp.state_features.resize(mdp.n_states);
    std::vector<std::size_t> v;
    std::size_t flag = 0;
    for (std::size_t s = 0; s < lay.body; ++s) {
        lay.decode(s, v, flag);
        auto& f = mdp.state_features[s];
        f.reserve(lay.vitals + 1);
        for (std::size_t j = 0; j < lay.vitals; ++j) f.push_back(static_cast<double>(v[j]));
        f.push_back(static_cast<double>(flag));
    }
    mdp.state_features[lay.death].assign(lay.vitals + 1, -1.0);
    mdp.state_features[lay.discharge].assign(lay.vitals + 1, -1.0);

    const std::size_t n_treat = cfg.n_treatments();
    std::vector<std::size_t> next(lay.vitals);
    for (std::size_t s = 0; s < lay.body; ++s) {
        lay.decode(s, v, flag);
        for (std::size_t a = 0; a < cfg.n_actions; ++a) {
            double* row = mdp.transition.data() + (s * mdp.n_actions + a) * mdp.n_states;
            // Per-vital move distributions under this action.
            std::vector<std::array<double, 3>> moves(lay.vitals);
            for (std::size_t j = 0; j < lay.vitals; ++j) {
                const bool treated = j < n_treat && ((a >> j) & 1u) != 0;
                const bool harmful =
                    treated && flag == 1 && j == sepsis::kHarmfulTreatment;
                const bool unstable = flag == 1 && j == lay.vitals - 1;
                detail::vital_step_probs(lay, v[j], treated, harmful, unstable,
                                         moves[j].data());
            }
            // Enumerate joint vital outcomes and route through the
            // death/discharge gates.
            std::vector<std::size_t> choice(lay.vitals, 0);
            while (true) {
                double p = 1.0;
                std::size_t extremes = 0;
                bool all_normal = true;
                for (std::size_t j = 0; j < lay.vitals; ++j) {
                    p *= moves[j][choice[j]];
                    const std::size_t lvl =
                        v[j] + choice[j] - 1; // choice 0/1/2 -> -1/0/+1, edges have prob 0
                    next[j] = lvl;
                    if (lay.is_extreme(lvl)) ++extremes;
                    if (lvl != lay.normal) all_normal = false;
                }
                if (p > 0.0) {
                    const double pd = sepsis::death_prob(extremes);
                    const double pdis = all_normal ? sepsis::kDischarge : 0.0;
                    row[lay.death] += p * pd;
                    row[lay.discharge] += p * pdis;
                    row[lay.index(next, flag)] += p * (1.0 - pd - pdis);
                }
                // next joint choice
                std::size_t j = 0;
                while (j < lay.vitals && choice[j] == 2) choice[j++] = 0;
                if (j == lay.vitals) break;
                ++choice[j];
            }
        }
    }
    // Terminal self-loops.
    for (std::size_t s : {lay.death, lay.discharge})
        for (std::size_t a = 0; a < cfg.n_actions; ++a)
            mdp.transition[(s * mdp.n_actions + a) * mdp.n_states + s] = 1.0;

    mdp.validate();
    return mdp;
}

/// Actions whose bit for the given treatment is set.
inline std::vector<std::size_t> actions_using_treatment(const SepsisConfig& cfg,
                                                        std::size_t treatment) {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < cfg.n_actions; ++a)
        if ((a >> treatment) & 1u) out.push_back(a);
    return out;
}

/// Behavior/evaluation pair per the data-generation protocol: policy
/// iteration, soften by soften_eps, then reduce the behavior policy's use of
/// one treatment and the evaluation policy's use of another.
struct SepsisPolicies {
    TabularPolicy star; // softened optimal
    TabularPolicy behavior;
    TabularPolicy evaluation;
};

inline SepsisPolicies make_sepsis_policies(const TabularMDP& mdp, const SepsisConfig& cfg) {
    SepsisPolicies out;
    out.star = soften(policy_iteration(mdp), cfg.soften_eps);
    const std::size_t n_treat = cfg.n_treatments();
    auto b_actions = cfg.b_shift_actions.empty()
                         ? actions_using_treatment(cfg, n_treat - 1)
                         : cfg.b_shift_actions;
    auto e_actions = cfg.e_shift_actions.empty()
                         ? actions_using_treatment(cfg, n_treat >= 2 ? 1 : 0)
                         : cfg.e_shift_actions;
    out.behavior = shift_action_mass(out.star, b_actions, cfg.b_shift_delta);
    out.evaluation = shift_action_mass(out.star, e_actions, cfg.e_shift_delta);
    return out;
}

} // namespace giope
