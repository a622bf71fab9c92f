#pragma once
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace giope {

// SplitMix64 mixing step. Used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stage tags for seed derivation. Every pipeline stage draws from its own
// stream of the master seed, so stages and sweep cells can be reordered or
// parallelized without changing any output.
enum : std::uint64_t {
    kSeedSplit = 1,
    kSeedSimulate = 2,
    kSeedFit = 3,
    kSeedEstimate = 4,
    kSeedOracle = 5,
    kSeedBootstrap = 6,
    kSeedTrajectory = 7,
    kSeedCell = 8,
    kSeedLeaf = 9,
};

// Counter-based derivation: seed -> stream. Chaining splitmix64 over the
// path ids keeps distinct paths on distinct streams.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(master);
    for (std::uint64_t id : path) s = splitmix64(s ^ splitmix64(id));
    return s;
}

/// Deterministic random source. mt19937_64 output is pinned by the standard;
/// the distribution transforms below are written out explicitly because the
/// std:: distributions are implementation-defined and would break
/// byte-identical reproducibility across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1]; safe for log().
    double uniform01_open() {
        return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Lemire's multiply-shift; the O(2^-64) bias
    /// is irrelevant here, determinism is not.
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(eng_()) * n) >> 64);
    }

    /// Box-Muller, no spare caching.
    double normal(double mean, double sd) {
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Draw an index from a probability row (linear walk). Never returns an
    /// index with zero probability.
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform01();
        double acc = 0.0;
        std::size_t last_positive = 0;
        bool seen = false;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            last_positive = i;
            seen = true;
            acc += probs[i];
            if (u < acc) return i;
        }
        (void)seen;
        return last_positive; // u fell into the rounding tail
    }

private:
    std::mt19937_64 eng_;
};

} // namespace giope
