#pragma once
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "giope/data.hpp"
#include "giope/errors.hpp"

namespace giope {

/// Mean of (rho_i * g_i - g_i) over the group. Unbiased for the group
/// treatment effect when the records are held out from partitioning.
inline double group_te_estimate(std::span<const EvalRecord> records) {
    if (records.empty()) throw EmptyGroup("group_te_estimate: empty group");
    double sum = 0.0;
    for (const auto& r : records) sum += r.rho * r.g - r.g;
    return sum / static_cast<double>(records.size());
}

/// (sum w)^2 / sum w^2.
inline double ess(std::span<const double> weights) {
    if (weights.empty()) throw EmptyGroup("ess: empty weight list");
    double s = 0.0, s2 = 0.0;
    for (double w : weights) {
        s += w;
        s2 += w * w;
    }
    if (!(s2 > 0.0)) throw DegenerateWeights("ess: all weights are zero");
    return s * s / s2;
}

namespace detail {
inline double ess_of_ratios(std::span<const EvalRecord> records, const char* who) {
    double s = 0.0, s2 = 0.0;
    for (const auto& r : records) {
        s += r.rho;
        s2 += r.rho * r.rho;
    }
    if (!(s2 > 0.0))
        throw DegenerateWeights(std::string(who) + ": all importance ratios are zero");
    return s * s / s2;
}
} // namespace detail

/// g_inf^2 * (1/ESS - 1/n): the stable stand-in for the estimator's variance
/// during partitioning. Zero exactly when all ratios are equal.
inline double variance_upper_bound(std::span<const EvalRecord> records, double g_inf) {
    if (records.empty()) throw EmptyGroup("variance_upper_bound: empty group");
    const double e = detail::ess_of_ratios(records, "variance_upper_bound");
    const double n = static_cast<double>(records.size());
    const double v = g_inf * g_inf * (1.0 / e - 1.0 / n);
    return v > 0.0 ? v : 0.0; // 1/ESS - 1/n can round a hair below zero
}

/// s^2 / n with the unbiased sample variance of the (rho*g - g) values.
inline double sample_variance_of_mean(std::span<const EvalRecord> records) {
    const std::size_t n = records.size();
    if (n < 2)
        throw TooFewSamples("sample_variance_of_mean: need at least 2 records, got " +
                            std::to_string(n));
    double mean = 0.0;
    for (const auto& r : records) mean += r.rho * r.g - r.g;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : records) {
        const double d = (r.rho * r.g - r.g) - mean;
        ss += d * d;
    }
    return ss / static_cast<double>(n - 1) / static_cast<double>(n);
}

/// Weighted importance sampling value: sum(rho*g) / sum(rho).
inline double wis_value(std::span<const EvalRecord> records) {
    double num = 0.0, den = 0.0;
    for (const auto& r : records) {
        num += r.rho * r.g;
        den += r.rho;
    }
    if (!(den > 0.0)) throw DegenerateWeights("wis_value: importance ratios sum to zero");
    return num / den;
}

/// Exponentiated order-2 Renyi divergence: sum_x q(x) * (p(x)/q(x))^2.
/// Equals 1 iff p == q; ESS = N / d2 for the population quantities.
inline double renyi_d2(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw SupportViolation("renyi_d2: distributions must share a support");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0)
            throw NotNormalized("renyi_d2: negative probability entry");
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
        throw NotNormalized("renyi_d2: distributions must sum to 1");
    double d2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            if (!(q[i] > 0.0))
                throw SupportViolation("renyi_d2: q is zero where p is positive (entry " +
                                       std::to_string(i) + ")");
            d2 += p[i] * p[i] / q[i];
        }
    }
    return d2;
}

/// Per-group summary used by the loss and the estimation phase.
struct GroupStats {
    std::size_t n = 0;
    double t_hat = 0.0;
    double ess = 0.0;
    double v_proxy = 0.0;
    double v_sample = 0.0; // 0 when n < 2
};

inline GroupStats compute_group_stats(std::span<const EvalRecord> records, double g_inf) {
    GroupStats s;
    s.n = records.size();
    s.t_hat = group_te_estimate(records);
    s.ess = detail::ess_of_ratios(records, "compute_group_stats");
    const double v = g_inf * g_inf * (1.0 / s.ess - 1.0 / static_cast<double>(s.n));
    s.v_proxy = v > 0.0 ? v : 0.0;
    s.v_sample = s.n >= 2 ? sample_variance_of_mean(records) : 0.0;
    return s;
}

} // namespace giope
