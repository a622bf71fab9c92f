#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "giope/data.hpp"
#include "giope/errors.hpp"
#include "giope/rng.hpp"

namespace giope {

/// One-dimensional illustration process on [0,1]: reward 1 - |x - 0.5|,
/// moves x <- clip(x + kappa*a + noise, 0, 1) for a in {-1, 0, +1}.
struct ToyConfig {
    double kappa = 0.2;
    double noise_sd = 0.05;
    std::size_t horizon = 4;
    std::size_t n_trajectories = 50000;
    double gamma = 1.0;
    // Run the evaluation policy identical to the behavior policy (null-effect
    // checks).
    bool identical_policies = false;
};

namespace toy {

inline double reward(double x) { return 1.0 - std::abs(x - 0.5); }

inline double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Action order: index 0 -> move -1, 1 -> stay, 2 -> move +1.
inline constexpr std::array<int, 3> kMoves{-1, 0, 1};

inline std::array<double, 3> behavior_probs(double x) {
    if (x < 0.2) return {0.25, 0.25, 0.5};
    return {0.5, 0.25, 0.25};
}

inline std::array<double, 3> evaluation_probs(double x) {
    if (x > 0.8) return {0.5, 0.25, 0.25};
    return {0.25, 0.25, 0.5};
}

inline std::array<double, 3> eval_probs_for(const ToyConfig& cfg, double x) {
    return cfg.identical_policies ? behavior_probs(x) : evaluation_probs(x);
}

inline double step(const ToyConfig& cfg, double x, int move, Rng& rng) {
    return clip01(x + cfg.kappa * static_cast<double>(move) +
                  rng.normal(0.0, cfg.noise_sd));
}

// Return of one rollout, gamma-weighted over every visited state including
// the start and the final state: sum_{t=0..H} gamma^t * reward(x_t).
inline double rollout_return(const ToyConfig& cfg, double x0, bool use_eval, Rng& rng) {
    double x = x0;
    double g = 0.0, w = 1.0;
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
        g += w * reward(x);
        w *= cfg.gamma;
        const auto probs = use_eval ? eval_probs_for(cfg, x) : behavior_probs(x);
        const std::size_t a = rng.categorical(probs);
        x = step(cfg, x, kMoves[a], rng);
    }
    g += w * reward(x);
    return g;
}

} // namespace toy

/// Sample trajectories from the toy process under the behavior policy,
/// x0 ~ Uniform[0,1]. Rewards are laid out so that the discounted return of
/// a trajectory equals sum_{t=0..H} gamma^t * reward(x_t): step t pays
/// reward(x_t), and the final state's reward is folded (gamma-weighted) into
/// the last step.
inline std::vector<Trajectory> toy_generate(const ToyConfig& cfg, std::uint64_t seed) {
    if (cfg.horizon < 1) throw Error("toy_generate: horizon must be >= 1");
    if (!(cfg.noise_sd > 0.0)) throw Error("toy_generate: noise_sd must be positive");
    std::vector<Trajectory> out;
    out.reserve(cfg.n_trajectories);
    for (std::size_t i = 0; i < cfg.n_trajectories; ++i) {
        Rng rng(derive_seed(seed, {kSeedTrajectory, i}));
        Trajectory traj;
        traj.id = std::to_string(i);
        double x = rng.uniform01();
        traj.x0 = {x};
        for (std::size_t t = 0; t < cfg.horizon; ++t) {
            const auto b = toy::behavior_probs(x);
            const auto e = toy::eval_probs_for(cfg, x);
            const std::size_t a = rng.categorical(b);
            traj.actions.push_back(toy::kMoves[a]);
            traj.rewards.push_back(toy::reward(x));
            traj.b_probs.push_back(b[a]);
            traj.e_probs.push_back(e[a]);
            x = toy::step(cfg, x, toy::kMoves[a], rng);
        }
        traj.rewards.back() += cfg.gamma * toy::reward(x);
        out.push_back(std::move(traj));
    }
    return out;
}

/// Monte-Carlo individual treatment effect at x0: mean return under the
/// evaluation policy minus mean return under the behavior policy, with
/// common random numbers per rollout pair.
inline double toy_oracle(const ToyConfig& cfg, double x0, std::size_t n_rollouts,
                         std::uint64_t seed) {
    if (n_rollouts < 1) throw Error("toy_oracle: n_rollouts must be >= 1");
    double acc = 0.0;
    for (std::size_t k = 0; k < n_rollouts; ++k) {
        const std::uint64_t s = derive_seed(seed, {kSeedOracle, k});
        Rng rng_e(s), rng_b(s);
        acc += toy::rollout_return(cfg, x0, true, rng_e) -
               toy::rollout_return(cfg, x0, false, rng_b);
    }
    return acc / static_cast<double>(n_rollouts);
}

} // namespace giope
