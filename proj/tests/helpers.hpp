#pragma once
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "giope/data.hpp"
#include "giope/envs/tabular.hpp"
#include "giope/loss.hpp"
#include "giope/rng.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("giope_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Small MDPs with hand-checkable structure
// ---------------------------------------------------------------------------

/// 2 states, 2 actions, no terminals. Action 0 mostly stays, action 1 mostly
/// swaps; reward 1 for entering state 1.
inline giope::TabularMDP two_state_mdp(std::size_t horizon = 2, double gamma = 0.9) {
    giope::TabularMDP mdp;
    mdp.n_states = 2;
    mdp.n_actions = 2;
    mdp.horizon = horizon;
    mdp.gamma = gamma;
    mdp.reward = {0.0, 1.0};
    mdp.initial = {0.6, 0.4};
    mdp.terminal = {0, 0};
    mdp.transition.assign(2 * 2 * 2, 0.0);
    auto set = [&](std::size_t s, std::size_t a, std::size_t s2, double p) {
        mdp.transition[(s * 2 + a) * 2 + s2] = p;
    };
    set(0, 0, 0, 0.8);
    set(0, 0, 1, 0.2);
    set(0, 1, 0, 0.3);
    set(0, 1, 1, 0.7);
    set(1, 0, 0, 0.25);
    set(1, 0, 1, 0.75);
    set(1, 1, 0, 0.6);
    set(1, 1, 1, 0.4);
    mdp.validate();
    return mdp;
}

/// 3 states, 2 actions, state 2 pays on entry; generic stochastic rows.
inline giope::TabularMDP three_state_mdp(std::size_t horizon = 2, double gamma = 0.9) {
    giope::TabularMDP mdp;
    mdp.n_states = 3;
    mdp.n_actions = 2;
    mdp.horizon = horizon;
    mdp.gamma = gamma;
    mdp.reward = {0.0, 0.25, 1.0};
    mdp.initial = {0.5, 0.3, 0.2};
    mdp.terminal = {0, 0, 0};
    mdp.transition.assign(3 * 2 * 3, 0.0);
    auto set = [&](std::size_t s, std::size_t a, std::initializer_list<double> row) {
        std::size_t s2 = 0;
        for (double p : row) mdp.transition[(s * 2 + a) * 3 + s2++] = p;
    };
    set(0, 0, {0.7, 0.2, 0.1});
    set(0, 1, {0.2, 0.5, 0.3});
    set(1, 0, {0.3, 0.4, 0.3});
    set(1, 1, {0.1, 0.3, 0.6});
    set(2, 0, {0.5, 0.25, 0.25});
    set(2, 1, {0.05, 0.15, 0.8});
    mdp.validate();
    return mdp;
}

inline giope::TabularPolicy uniform_policy(std::size_t n_states, std::size_t n_actions) {
    giope::TabularPolicy p;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.probs.assign(n_states * n_actions, 1.0 / static_cast<double>(n_actions));
    return p;
}

inline giope::TabularPolicy make_policy(std::size_t n_states, std::size_t n_actions,
                                        const std::vector<double>& rows) {
    giope::TabularPolicy p;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.probs = rows;
    return p;
}

inline giope::TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions,
                                          giope::Rng& rng) {
    giope::TabularPolicy p;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.probs.resize(n_states * n_actions);
    for (std::size_t s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (std::size_t a = 0; a < n_actions; ++a) {
            const double v = rng.uniform01_open();
            p.probs[s * n_actions + a] = v;
            sum += v;
        }
        for (std::size_t a = 0; a < n_actions; ++a) p.probs[s * n_actions + a] /= sum;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Exact trajectory enumeration (independent oracle for small MDPs)
// ---------------------------------------------------------------------------

/// One complete trajectory outcome with its exact probability under the
/// behavior policy.
struct PathOutcome {
    std::size_t s0 = 0;
    double rho = 1.0;
    double g = 0.0;
    double prob = 1.0;
};

namespace detail {
inline void expand(const giope::TabularMDP& mdp, const giope::TabularPolicy& pb,
                   const giope::TabularPolicy& pe, std::size_t s, std::size_t t,
                   PathOutcome cur, std::vector<PathOutcome>& out) {
    if (t == mdp.horizon || mdp.terminal[s]) {
        out.push_back(cur);
        return;
    }
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        const double pba = pb.p(s, a);
        if (pba == 0.0) continue;
        for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
            const double ptr = mdp.p(s, a, s2);
            if (ptr == 0.0) continue;
            PathOutcome next = cur;
            next.prob *= pba * ptr;
            next.rho *= pe.p(s, a) / pba;
            next.g += std::pow(mdp.gamma, static_cast<double>(t)) * mdp.reward[s2];
            expand(mdp, pb, pe, s2, t + 1, next, out);
        }
    }
}
} // namespace detail

/// All trajectory outcomes starting from `s0`, with probabilities summing
/// to 1.
inline std::vector<PathOutcome> enumerate_paths(const giope::TabularMDP& mdp,
                                                const giope::TabularPolicy& pb,
                                                const giope::TabularPolicy& pe,
                                                std::size_t s0) {
    std::vector<PathOutcome> out;
    PathOutcome start;
    start.s0 = s0;
    detail::expand(mdp, pb, pe, s0, 0, start, out);
    return out;
}

/// Exact per-state mean and variance of the single-record value
/// (rho - 1) * g under the behavior policy.
struct StateMoments {
    double mean = 0.0;
    double var = 0.0;
};

inline StateMoments state_moments(const giope::TabularMDP& mdp, const giope::TabularPolicy& pb,
                                  const giope::TabularPolicy& pe, std::size_t s0) {
    StateMoments m;
    double second = 0.0;
    for (const auto& p : enumerate_paths(mdp, pb, pe, s0)) {
        const double d = (p.rho - 1.0) * p.g;
        m.mean += p.prob * d;
        second += p.prob * d * d;
    }
    m.var = second - m.mean * m.mean;
    return m;
}

// ---------------------------------------------------------------------------
// Exhaustive split-search oracle (brute force through the public loss)
// ---------------------------------------------------------------------------

struct OracleSplit {
    int feature = -1;
    double threshold = 0.0;
    double loss_after = 0.0;
};

/// Enumerate every feature and every midpoint threshold, score each
/// admissible candidate by materializing the two groups and calling
/// giope_loss, and keep the first strict minimum in (feature, threshold)
/// scan order. Returns nullopt when nothing beats the unsplit loss by more
/// than cfg.tol.
inline std::optional<OracleSplit> brute_force_split(const std::vector<giope::EvalRecord>& records,
                                                    const giope::LossConfig& cfg, double g_inf) {
    using namespace giope;
    const std::size_t m = records.empty() ? 0 : records.front().x.size();

    double unsplit = 0.0;
    try {
        LabeledPartition whole;
        whole.groups.emplace_back(0, records);
        unsplit = giope_loss(whole, cfg, g_inf);
    } catch (const Error&) {
        return std::nullopt;
    }

    std::optional<OracleSplit> best;
    for (std::size_t f = 0; f < m; ++f) {
        std::vector<double> values;
        for (const auto& r : records) values.push_back(r.x[f]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 1; k < values.size(); ++k) {
            const double thr = (values[k - 1] + values[k]) / 2.0;
            LabeledPartition part;
            part.groups.emplace_back(0, std::vector<EvalRecord>{});
            part.groups.emplace_back(1, std::vector<EvalRecord>{});
            for (const auto& r : records)
                part.groups[r.x[f] <= thr ? 0 : 1].second.push_back(r);
            if (part.groups[0].second.size() < cfg.min_leaf ||
                part.groups[1].second.size() < cfg.min_leaf)
                continue;
            bool zero_mass = false;
            for (const auto& [id, recs] : part.groups) {
                double s2 = 0.0;
                for (const auto& r : recs) s2 += r.rho * r.rho;
                if (!(s2 > 0.0)) zero_mass = true;
            }
            if (zero_mass) continue;
            double loss;
            try {
                loss = giope_loss(part, cfg, g_inf);
            } catch (const Error&) {
                continue;
            }
            if (!best || loss < best->loss_after)
                best = OracleSplit{static_cast<int>(f), thr, loss};
        }
    }
    if (best && best->loss_after < unsplit - cfg.tol) return best;
    return std::nullopt;
}

/// Random record generator for property tests: a few distinct feature values,
/// nonnegative ratios (occasionally zero), signed returns.
inline std::vector<giope::EvalRecord> random_records(giope::Rng& rng, std::size_t n,
                                                     std::size_t m) {
    std::vector<giope::EvalRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        giope::EvalRecord r;
        for (std::size_t j = 0; j < m; ++j)
            r.x.push_back(static_cast<double>(rng.bounded(8)) / 2.0);
        const double u = rng.uniform01();
        r.rho = u < 0.15 ? 0.0 : rng.uniform01() * 3.0;
        r.g = rng.uniform01() * 2.0 - 1.0;
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace testutil
