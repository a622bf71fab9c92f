#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "giope/data.hpp"
#include "giope/errors.hpp"
#include "giope/estimators.hpp"
#include "giope/rng.hpp"
#include "giope/tree.hpp"

namespace giope {

/// Per-leaf result of the estimation phase.
struct GroupEstimate {
    int leaf = 0;
    std::size_t n = 0;
    double t_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double ess = 0.0;
    double v_proxy = 0.0;
    std::string rule;
};

struct MetricsReport {
    double individual_mse = 0.0;
    double group_mse = 0.0;
    double coverage = 0.0;
    double mean_ci_width = 0.0;
    std::size_t n_groups = 0;
};

namespace detail {
// Quantile by linear interpolation between order statistics (sorted input).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}
} // namespace detail

/// Percentile bootstrap interval for the group treatment effect. Replicate b
/// draws with a child seed derived from (seed, b), so the result does not
/// depend on evaluation order.
inline std::pair<double, double> bootstrap_ci(std::span<const EvalRecord> records,
                                              std::size_t B, double level,
                                              std::uint64_t seed) {
    if (records.empty()) throw EmptyGroup("bootstrap_ci: empty group");
    if (B < 1) throw Error("bootstrap_ci: B must be >= 1");
    if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap_ci: level must be in (0,1)");

    const std::size_t n = records.size();
    std::vector<double> estimates(B);
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng(derive_seed(seed, {kSeedBootstrap, b}));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = records[rng.bounded(n)];
            sum += r.rho * r.g - r.g;
        }
        estimates[b] = sum / static_cast<double>(n);
    }
    std::sort(estimates.begin(), estimates.end());
    const double tail = (1.0 - level) / 2.0;
    return {detail::quantile_sorted(estimates, tail),
            detail::quantile_sorted(estimates, 1.0 - tail)};
}

/// Estimation phase: per-leaf effect estimates with bootstrap CIs on the
/// held-out estimation records. One estimate per leaf, ordered by leaf id.
inline std::vector<GroupEstimate> estimate_groups(const Tree& tree, const Dataset& est,
                                                  std::size_t B, double level,
                                                  std::uint64_t seed,
                                                  std::optional<double> g_inf_override = {}) {
    const double g_inf = g_inf_override.value_or(est.g_inf());
    const int leaves = tree.leaf_count();
    std::vector<std::vector<EvalRecord>> members(static_cast<std::size_t>(leaves));
    for (const auto& r : est.records())
        members[static_cast<std::size_t>(tree.assign_leaf(r.x))].push_back(r);

    std::string empties;
    for (int l = 0; l < leaves; ++l)
        if (members[static_cast<std::size_t>(l)].empty())
            empties += (empties.empty() ? "" : ", ") + std::to_string(l);
    if (!empties.empty())
        throw EmptyLeaf("leaves without estimation records: " + empties);

    const auto rules = tree.leaf_rules();
    std::vector<GroupEstimate> out;
    out.reserve(static_cast<std::size_t>(leaves));
    for (int l = 0; l < leaves; ++l) {
        const auto& recs = members[static_cast<std::size_t>(l)];
        GroupEstimate ge;
        ge.leaf = l;
        ge.n = recs.size();
        GroupStats stats;
        try {
            stats = compute_group_stats(recs, g_inf);
        } catch (const DegenerateWeights&) {
            throw DegenerateWeights("estimate_groups: leaf " + std::to_string(l) +
                                    " has zero importance mass");
        }
        ge.t_hat = stats.t_hat;
        ge.ess = stats.ess;
        ge.v_proxy = stats.v_proxy;
        const auto ci = bootstrap_ci(recs, B, level,
                                     derive_seed(seed, {kSeedLeaf, static_cast<std::uint64_t>(l)}));
        ge.ci_low = ci.first;
        ge.ci_high = ci.second;
        ge.rule = rules[static_cast<std::size_t>(l)];
        out.push_back(std::move(ge));
    }
    return out;
}

/// Individual and group MSE, CI coverage and width against supplied truths.
inline MetricsReport compute_metrics(
    std::span<const GroupEstimate> estimates, const Tree& tree,
    std::span<const std::pair<std::vector<double>, double>> test_points,
    std::span<const std::pair<int, double>> group_truth) {
    std::map<int, const GroupEstimate*> by_leaf;
    for (const auto& e : estimates) by_leaf[e.leaf] = &e;
    std::map<int, double> truth;
    for (const auto& [leaf, t] : group_truth) truth[leaf] = t;

    MetricsReport rep;
    rep.n_groups = estimates.size();

    double ind = 0.0;
    for (const auto& [x, t_true] : test_points) {
        const int leaf = tree.assign_leaf(x);
        auto it = by_leaf.find(leaf);
        if (it == by_leaf.end())
            throw MissingTruth("compute_metrics: no estimate for leaf " + std::to_string(leaf));
        const double err = t_true - it->second->t_hat;
        ind += err * err;
    }
    rep.individual_mse = test_points.empty() ? 0.0 : ind / static_cast<double>(test_points.size());

    double grp = 0.0, width = 0.0;
    std::size_t covered = 0;
    for (const auto& e : estimates) {
        auto it = truth.find(e.leaf);
        if (it == truth.end())
            throw MissingTruth("compute_metrics: no truth for leaf " + std::to_string(e.leaf));
        const double err = it->second - e.t_hat;
        grp += err * err;
        width += e.ci_high - e.ci_low;
        if (it->second >= e.ci_low && it->second <= e.ci_high) ++covered;
    }
    if (!estimates.empty()) {
        const auto g = static_cast<double>(estimates.size());
        rep.group_mse = grp / g;
        rep.mean_ci_width = width / g;
        rep.coverage = static_cast<double>(covered) / g;
    }
    return rep;
}

} // namespace giope
