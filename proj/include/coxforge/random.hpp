#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace coxforge {

/// SplitMix64 finalizer. Sub-seeds are derived as mix(seed ^ mix(stream + 1)),
/// so every consumer of one user seed gets an independent, reproducible stream.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 1));
}

// Stream identifiers used across the pipeline.
namespace streams {
inline constexpr std::uint64_t contact = 1;
inline constexpr std::uint64_t theta = 2;
inline constexpr std::uint64_t counts = 3;
inline constexpr std::uint64_t folds = 4;
inline constexpr std::uint64_t fixed_effects = 5;
}  // namespace streams

using Rng = std::mt19937_64;

/// Box-Muller standard normal; avoids std::normal_distribution so draws do not
/// depend on the standard library in use.
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    /// Poisson draw: multiplication method below mean 10, Hoermann's PTRS
    /// transformed rejection above.
    long poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        if (mean < 10.0) {
            const double limit = std::exp(-mean);
            long k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<long>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                -mean + k * loglam - std::lgamma(k + 1.0))
                return static_cast<long>(k);
        }
    }

    Rng& engine() { return rng_; }

private:
    Rng rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace coxforge
