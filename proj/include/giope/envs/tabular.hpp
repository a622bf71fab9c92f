#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "giope/data.hpp"
#include "giope/errors.hpp"
#include "giope/rng.hpp"

namespace giope {

/// Finite episodic MDP. Rewards are paid on state entry: stepping into s'
/// from a non-terminal state yields reward[s']. Terminal states self-loop
/// and pay nothing after entry; episodes stop there.
struct TabularMDP {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition; // [s][a][s'], rows stochastic
    std::vector<double> reward;     // entry reward per state
    std::vector<double> initial;    // distribution over start states
    std::vector<std::uint8_t> terminal;
    std::size_t horizon = 0;
    double gamma = 1.0;
    // Feature encoding of each state for grouping; empty means "use the
    // state index as a single feature".
    std::vector<std::vector<double>> state_features;

    double p(std::size_t s, std::size_t a, std::size_t s2) const {
        return transition[(s * n_actions + a) * n_states + s2];
    }
    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {transition.data() + (s * n_actions + a) * n_states, n_states};
    }
    std::vector<double> features_of(std::size_t s) const {
        if (state_features.empty()) return {static_cast<double>(s)};
        return state_features[s];
    }
    std::size_t feature_count() const {
        return state_features.empty() ? 1 : state_features.front().size();
    }

    void validate() const {
        if (transition.size() != n_states * n_actions * n_states)
            throw Error("TabularMDP: transition table has wrong size");
        for (std::size_t s = 0; s < n_states; ++s)
            for (std::size_t a = 0; a < n_actions; ++a) {
                double sum = 0.0;
                for (double v : row(s, a)) {
                    if (v < 0.0) throw Error("TabularMDP: negative transition probability");
                    sum += v;
                }
                if (std::abs(sum - 1.0) > 1e-9)
                    throw Error("TabularMDP: transition row (" + std::to_string(s) + "," +
                                std::to_string(a) + ") sums to " + std::to_string(sum));
            }
        double init_sum = 0.0;
        for (double v : initial) init_sum += v;
        if (std::abs(init_sum - 1.0) > 1e-9)
            throw Error("TabularMDP: initial distribution does not sum to 1");
    }
};

struct TabularPolicy {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> probs; // [s][a], rows stochastic

    double p(std::size_t s, std::size_t a) const { return probs[s * n_actions + a]; }
    std::span<const double> row(std::size_t s) const {
        return {probs.data() + s * n_actions, n_actions};
    }
    bool is_deterministic() const {
        for (std::size_t s = 0; s < n_states; ++s) {
            for (std::size_t a = 0; a < n_actions; ++a) {
                const double v = p(s, a);
                if (v != 0.0 && v != 1.0) return false;
            }
        }
        return true;
    }
};

namespace detail {
// Step reward for s --a--> s2. Entry reward, suppressed once inside a
// terminal state.
inline double step_reward(const TabularMDP& mdp, std::size_t s, std::size_t s2) {
    return mdp.terminal[s] ? 0.0 : mdp.reward[s2];
}
} // namespace detail

/// Finite-horizon value of each state under a policy (backward induction).
inline std::vector<double> policy_value(const TabularMDP& mdp, const TabularPolicy& pol) {
    std::vector<double> v(mdp.n_states, 0.0), next(mdp.n_states, 0.0);
    for (std::size_t h = 0; h < mdp.horizon; ++h) {
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            if (mdp.terminal[s]) {
                next[s] = 0.0;
                continue;
            }
            double acc = 0.0;
            for (std::size_t a = 0; a < mdp.n_actions; ++a) {
                const double pa = pol.p(s, a);
                if (pa == 0.0) continue;
                double q = 0.0;
                const auto r = mdp.row(s, a);
                for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
                    if (r[s2] > 0.0) q += r[s2] * (mdp.reward[s2] + mdp.gamma * v[s2]);
                acc += pa * q;
            }
            next[s] = acc;
        }
        std::swap(v, next);
    }
    return v;
}

/// Deterministic optimal policy for the finite-horizon objective: backward
/// induction over the full horizon, returning the greedy policy at step 0.
/// Ties break toward the lowest action index.
inline TabularPolicy policy_iteration(const TabularMDP& mdp) {
    std::vector<double> v(mdp.n_states, 0.0), next(mdp.n_states, 0.0);
    std::vector<std::size_t> argmax(mdp.n_states, 0);
    for (std::size_t h = 0; h < mdp.horizon; ++h) {
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            if (mdp.terminal[s]) {
                next[s] = 0.0;
                argmax[s] = 0;
                continue;
            }
            double best = 0.0;
            std::size_t best_a = 0;
            for (std::size_t a = 0; a < mdp.n_actions; ++a) {
                double q = 0.0;
                const auto r = mdp.row(s, a);
                for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
                    if (r[s2] > 0.0) q += r[s2] * (mdp.reward[s2] + mdp.gamma * v[s2]);
                if (a == 0 || q > best) {
                    best = q;
                    best_a = a;
                }
            }
            next[s] = best;
            argmax[s] = best_a;
        }
        std::swap(v, next);
    }
    TabularPolicy pol;
    pol.n_states = mdp.n_states;
    pol.n_actions = mdp.n_actions;
    pol.probs.assign(mdp.n_states * mdp.n_actions, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) pol.probs[s * mdp.n_actions + argmax[s]] = 1.0;
    return pol;
}

/// Move eps of the chosen action's mass to the other actions, equally.
inline TabularPolicy soften(const TabularPolicy& policy, double eps) {
    if (!policy.is_deterministic())
        throw NotDeterministic("soften: policy must be deterministic");
    if (!(eps >= 0.0 && eps <= 1.0)) throw Error("soften: eps must be in [0,1]");
    if (policy.n_actions < 2) throw Error("soften: need at least 2 actions");
    TabularPolicy out = policy;
    const double rest = eps / static_cast<double>(policy.n_actions - 1);
    for (std::size_t s = 0; s < policy.n_states; ++s)
        for (std::size_t a = 0; a < policy.n_actions; ++a)
            out.probs[s * policy.n_actions + a] =
                policy.p(s, a) == 1.0 ? 1.0 - eps : rest;
    return out;
}

/// Scale the total mass on `target_actions` by (1 - delta) in every state and
/// hand the removed mass to the complement, proportionally to its existing
/// mass (uniformly when the complement has none).
inline TabularPolicy shift_action_mass(const TabularPolicy& policy,
                                       std::span<const std::size_t> target_actions,
                                       double delta) {
    if (!(delta >= 0.0 && delta <= 1.0))
        throw InvalidDelta("shift_action_mass: delta must be in [0,1]");
    std::vector<bool> is_target(policy.n_actions, false);
    for (std::size_t a : target_actions) {
        if (a >= policy.n_actions)
            throw InvalidDelta("shift_action_mass: action " + std::to_string(a) +
                               " out of range");
        is_target[a] = true;
    }
    std::size_t complement = 0;
    for (std::size_t a = 0; a < policy.n_actions; ++a)
        if (!is_target[a]) ++complement;
    if (complement == 0)
        throw InvalidDelta("shift_action_mass: target set covers all actions");

    TabularPolicy out = policy;
    for (std::size_t s = 0; s < policy.n_states; ++s) {
        double target_mass = 0.0, comp_mass = 0.0;
        for (std::size_t a = 0; a < policy.n_actions; ++a)
            (is_target[a] ? target_mass : comp_mass) += policy.p(s, a);
        const double removed = target_mass * delta;
        for (std::size_t a = 0; a < policy.n_actions; ++a) {
            double v = policy.p(s, a);
            if (is_target[a]) {
                v *= 1.0 - delta;
            } else if (comp_mass > 0.0) {
                v += removed * (v / comp_mass);
            } else {
                v += removed / static_cast<double>(complement);
            }
            out.probs[s * policy.n_actions + a] = v;
        }
    }
    return out;
}

/// Sample n trajectories under policy_b, carrying both policies'
/// probabilities of the taken actions. Trajectory i draws from its own
/// derived seed, so the output is independent of scheduling.
inline std::vector<Trajectory> simulate(const TabularMDP& mdp, const TabularPolicy& policy_b,
                                        const TabularPolicy& policy_e, std::size_t n,
                                        std::uint64_t seed) {
    // Cumulative rows for fast sampling.
    auto cdf_of = [](std::span<const double> probs) {
        std::vector<double> cdf(probs.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            cdf[i] = acc;
        }
        return cdf;
    };
    std::vector<double> init_cdf = cdf_of(mdp.initial);
    std::vector<std::vector<double>> trans_cdf(mdp.n_states * mdp.n_actions);
    auto sample_cdf = [](Rng& rng, std::span<const double> cdf,
                         std::span<const double> probs) {
        const double u = rng.uniform01();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t i = it == cdf.end() ? cdf.size() - 1
                                        : static_cast<std::size_t>(it - cdf.begin());
        while (i > 0 && probs[i] == 0.0) --i; // rounding tail must not pick mass-0 entries
        return i;
    };

    std::vector<Trajectory> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, {kSeedTrajectory, i}));
        Trajectory traj;
        traj.id = std::to_string(i);
        std::size_t s = sample_cdf(rng, init_cdf, mdp.initial);
        traj.x0 = mdp.features_of(s);
        for (std::size_t t = 0; t < mdp.horizon && !mdp.terminal[s]; ++t) {
            const std::size_t a = rng.categorical(policy_b.row(s));
            auto& cdf = trans_cdf[s * mdp.n_actions + a];
            if (cdf.empty()) cdf = cdf_of(mdp.row(s, a));
            const std::size_t s2 = sample_cdf(rng, cdf, mdp.row(s, a));
            traj.actions.push_back(static_cast<int>(a));
            traj.rewards.push_back(detail::step_reward(mdp, s, s2));
            traj.b_probs.push_back(policy_b.p(s, a));
            traj.e_probs.push_back(policy_e.p(s, a));
            s = s2;
        }
        out.push_back(std::move(traj));
    }
    return out;
}

/// Exact individual treatment effect from one initial state: the difference
/// of finite-horizon values under the two policies.
inline double exact_treatment_effect(const TabularMDP& mdp, const TabularPolicy& policy_e,
                                     const TabularPolicy& policy_b, std::size_t state) {
    return policy_value(mdp, policy_e)[state] - policy_value(mdp, policy_b)[state];
}

/// Group treatment effect: sum of t(s) weighted by the initial distribution
/// restricted to the member states and renormalized.
inline double exact_group_effect(const TabularMDP& mdp, const TabularPolicy& policy_e,
                                 const TabularPolicy& policy_b,
                                 std::span<const std::size_t> member_states) {
    const auto ve = policy_value(mdp, policy_e);
    const auto vb = policy_value(mdp, policy_b);
    double mass = 0.0, acc = 0.0;
    for (std::size_t s : member_states) {
        mass += mdp.initial[s];
        acc += mdp.initial[s] * (ve[s] - vb[s]);
    }
    if (!(mass > 0.0)) throw ZeroMassGroup("exact_group_effect: group has zero initial mass");
    return acc / mass;
}

} // namespace giope
