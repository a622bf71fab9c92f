#pragma once
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "giope/data.hpp"
#include "giope/errors.hpp"
#include "giope/estimators.hpp"

namespace giope {

enum class VarianceMode { Proxy, Sample };
enum class RegMode { Off, Margin, Ratio };

inline double default_cantelli_c() { return std::sqrt(1.5); } // 1-delta/delta at delta = 0.4

/// Knobs of the partitioning loss. The defaults are the full method:
/// proxy variance with the margin regularizer, C = 5.0, alpha = 0.05.
struct LossConfig {
    VarianceMode variance_mode = VarianceMode::Proxy;
    RegMode reg_mode = RegMode::Margin;
    double C = 5.0;
    double alpha = 0.05;
    double c = default_cantelli_c();
    std::size_t min_leaf = 50;
    std::optional<std::size_t> max_depth{}; // nullopt = unlimited
    std::size_t max_thresholds = 64;
    double tol = 1e-12; // required strict loss improvement per split
};

/// Records grouped by leaf id. Groups must be disjoint and nonempty and
/// cover the node's record set.
struct LabeledPartition {
    std::vector<std::pair<int, std::vector<EvalRecord>>> groups;
};

/// max{0, alpha - (|t_hat| - c * sqrt(v_proxy))}: pushes leaves toward
/// effects that clear the margin after the confidence haircut.
inline double margin_regularizer(double t_hat, double v_proxy, double alpha, double c) {
    const double r = alpha - (std::abs(t_hat) - c * std::sqrt(v_proxy));
    return r > 0.0 ? r : 0.0;
}

/// max{0, alpha - |t_hat| / (c * sqrt(v_proxy))}: variant for callers willing
/// to accept more uncertainty when the effect is larger.
inline double ratio_regularizer(double t_hat, double v_proxy, double alpha, double c) {
    const double den = c * std::sqrt(v_proxy);
    if (!(c * c * v_proxy > 0.0))
        throw ZeroDenominator("ratio_regularizer: c^2 * v_proxy is zero");
    const double r = alpha - std::abs(t_hat) / den;
    return r > 0.0 ? r : 0.0;
}

namespace detail {

// Column kernels. The tree's split scan and the partition-level loss both go
// through these, with identical accumulation order, so a split chosen from
// column views reproduces giope_loss on the materialized groups bit-for-bit.

inline double mean_kernel(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Two-pass unbiased variance of the mean, matching sample_variance_of_mean.
inline double v_sample_kernel(std::span<const double> d) {
    const auto n = static_cast<double>(d.size());
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    return ss / (n - 1.0) / n;
}

inline double sum_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double v_proxy_kernel(std::span<const double> rho, double g_inf) {
    double s = 0.0, s2 = 0.0;
    for (double w : rho) {
        s += w;
        s2 += w * w;
    }
    const double e = s * s / s2;
    const double v = g_inf * g_inf * (1.0 / e - 1.0 / static_cast<double>(rho.size()));
    return v > 0.0 ? v : 0.0;
}

inline double regularizer_value(double t_hat, double v_proxy, const LossConfig& cfg) {
    switch (cfg.reg_mode) {
        case RegMode::Off:
            return 0.0;
        case RegMode::Margin:
            return margin_regularizer(t_hat, v_proxy, cfg.alpha, cfg.c);
        case RegMode::Ratio:
            // Limit convention at v_proxy = 0: the ratio is 0 for t_hat = 0
            // and +inf otherwise.
            if (!(cfg.c * cfg.c * v_proxy > 0.0))
                return t_hat == 0.0 ? cfg.alpha : 0.0;
            return ratio_regularizer(t_hat, v_proxy, cfg.alpha, cfg.c);
    }
    return 0.0;
}

struct LeafTerm {
    bool admissible = false;
    const char* why = nullptr;   // set when inadmissible
    double value = 0.0;          // -t_hat^2 + 2V (+ C*R with regularization)
};

// Per-record loss contribution of one leaf given its (rho, rho*g - g) columns.
inline LeafTerm leaf_term(std::span<const double> rho, std::span<const double> d,
                          const LossConfig& cfg, double g_inf, bool with_reg) {
    if (rho.empty()) return {false, "empty group", 0.0};
    const bool needs_ess = cfg.variance_mode == VarianceMode::Proxy ||
                           (with_reg && cfg.reg_mode != RegMode::Off);
    if (needs_ess && !(sum_sq(rho) > 0.0))
        return {false, "all importance ratios are zero", 0.0};
    if (cfg.variance_mode == VarianceMode::Sample && rho.size() < 2)
        return {false, "fewer than 2 records under sample variance", 0.0};

    const double t_hat = mean_kernel(d);
    const double v = cfg.variance_mode == VarianceMode::Proxy ? v_proxy_kernel(rho, g_inf)
                                                              : v_sample_kernel(d);
    double term = -t_hat * t_hat + 2.0 * v;
    if (with_reg && cfg.reg_mode != RegMode::Off) {
        const double v_proxy = cfg.variance_mode == VarianceMode::Proxy
                                   ? v
                                   : v_proxy_kernel(rho, g_inf);
        term += cfg.C * regularizer_value(t_hat, v_proxy, cfg);
    }
    return {true, nullptr, term};
}

inline double partition_loss(const LabeledPartition& part, const LossConfig& cfg,
                             double g_inf, bool with_reg) {
    std::size_t total = 0;
    double acc = 0.0;
    std::vector<double> rho, d;
    for (const auto& [id, recs] : part.groups) {
        rho.clear();
        d.clear();
        rho.reserve(recs.size());
        d.reserve(recs.size());
        for (const auto& r : recs) {
            rho.push_back(r.rho);
            d.push_back(r.rho * r.g - r.g);
        }
        const LeafTerm t = leaf_term(rho, d, cfg, g_inf, with_reg);
        if (!t.admissible)
            throw InadmissibleGroup("group " + std::to_string(id) + ": " + t.why);
        acc += static_cast<double>(recs.size()) * t.value;
        total += recs.size();
    }
    if (total == 0) throw EmptyGroup("loss: partition has no records");
    return acc / static_cast<double>(total);
}

} // namespace detail

/// Empirical adjusted MSE: -(1/N) sum T_hat^2(x_i) + (2/N) sum V[T_hat(x_i)],
/// with the variance term chosen by cfg.variance_mode.
inline double emse(const LabeledPartition& part, const LossConfig& cfg, double g_inf) {
    return detail::partition_loss(part, cfg, g_inf, /*with_reg=*/false);
}

/// The final partitioning loss: emse plus (C/N) * sum of the per-record
/// regularizer. The regularizer always uses the proxy variance, whatever the
/// EMSE variance mode is.
inline double giope_loss(const LabeledPartition& part, const LossConfig& cfg, double g_inf) {
    if (cfg.reg_mode == RegMode::Off) return emse(part, cfg, g_inf);
    return detail::partition_loss(part, cfg, g_inf, /*with_reg=*/true);
}

} // namespace giope
