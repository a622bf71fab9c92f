#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "giope/errors.hpp"
#include "giope/rng.hpp"

namespace giope {

/// One logged episode. The behavior/evaluation probabilities of the taken
/// actions are stored on the trajectory itself, so real-world logs (where
/// only the logged propensity is known) and simulators go through one path.
struct Trajectory {
    std::string id;
    std::vector<double> x0;      // initial-state features, length M
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<double> b_probs; // behavior probability of each taken action
    std::vector<double> e_probs; // evaluation probability of each taken action

    std::size_t steps() const { return actions.size(); }
};

/// The dataset atom: initial features, importance ratio, discounted return.
struct EvalRecord {
    std::vector<double> x;
    double rho = 0.0;
    double g = 0.0;
};

/// Sum of gamma^t * r_t over the trajectory's steps. Empty trajectory -> 0.
inline double discounted_return(const Trajectory& traj, double gamma) {
    double g = 0.0;
    double w = 1.0;
    for (double r : traj.rewards) {
        g += w * r;
        w *= gamma;
    }
    return g;
}

/// Product over steps of e_probs[t] / b_probs[t].
inline double importance_ratio(const Trajectory& traj) {
    double rho = 1.0;
    for (std::size_t t = 0; t < traj.b_probs.size(); ++t) {
        if (!(traj.b_probs[t] > 0.0))
            throw SupportViolation("importance_ratio: trajectory '" + traj.id +
                                   "' has non-positive behavior probability at step " +
                                   std::to_string(t));
        if (traj.e_probs[t] < 0.0)
            throw SupportViolation("importance_ratio: trajectory '" + traj.id +
                                   "' has negative evaluation probability at step " +
                                   std::to_string(t));
        rho *= traj.e_probs[t] / traj.b_probs[t];
    }
    return rho;
}

/// Immutable record collection with a cached max |g| (the sup-norm surrogate
/// used by the variance bound).
class Dataset {
public:
    Dataset() = default;

    Dataset(std::vector<EvalRecord> records, std::size_t m)
        : records_(std::move(records)), m_(m) {
        for (const auto& r : records_) {
            if (r.x.size() != m_)
                throw MixedWidth("Dataset: record feature length " +
                                 std::to_string(r.x.size()) + " != " + std::to_string(m_));
            g_inf_ = std::max(g_inf_, std::abs(r.g));
        }
    }

    const std::vector<EvalRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    std::size_t m() const { return m_; }
    double g_inf() const { return g_inf_; }

private:
    std::vector<EvalRecord> records_;
    std::size_t m_ = 0;
    double g_inf_ = 0.0;
};

/// Reduce trajectories to (x0, rho, g) records, order preserved.
inline Dataset to_records(std::span<const Trajectory> trajs, double gamma) {
    std::vector<EvalRecord> recs;
    recs.reserve(trajs.size());
    const std::size_t m = trajs.empty() ? 0 : trajs.front().x0.size();
    for (const auto& traj : trajs) {
        if (traj.x0.size() != m)
            throw MixedWidth("to_records: trajectory '" + traj.id + "' has " +
                             std::to_string(traj.x0.size()) + " features, expected " +
                             std::to_string(m));
        const double rho = importance_ratio(traj);
        const double g = discounted_return(traj, gamma);
        if (!std::isfinite(rho) || !std::isfinite(g))
            throw SchemaError("to_records: trajectory '" + traj.id +
                              "' produced a non-finite record");
        recs.push_back(EvalRecord{traj.x0, rho, g});
    }
    return Dataset(std::move(recs), m);
}

/// Disjoint covering split for the partitioning/estimation phases. The first
/// part gets round(fraction*N) records (half up); the permutation depends
/// only on (N, fraction, seed). Record order within each part follows the
/// input order.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction,
                                                 std::uint64_t seed) {
    if (ds.empty()) throw EmptyDataset("split_dataset: empty dataset");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw Error("split_dataset: fraction must be in (0,1)");

    const std::size_t n = ds.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {kSeedSplit}));
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.bounded(i + 1)]);

    const auto k = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(n) + 0.5));
    std::vector<std::size_t> first(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> second(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());

    auto take = [&](const std::vector<std::size_t>& idx) {
        std::vector<EvalRecord> part;
        part.reserve(idx.size());
        for (std::size_t i : idx) part.push_back(ds.records()[i]);
        return Dataset(std::move(part), ds.m());
    };
    return {take(first), take(second)};
}

} // namespace giope
