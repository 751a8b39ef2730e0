#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace asq {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the `stream`-th independent generator below `root`.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t root, std::uint64_t stream) { return Rng(derive_seed(root, stream)); }

/// Uniform double in [0, 1) built from the top 53 bits; identical on every standard library.
inline double uniform01(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool fair_coin(Rng &rng) { return (rng() >> 63) != 0; }

inline bool bernoulli(Rng &rng, double p) { return uniform01(rng) < p; }

inline std::complex<double> random_unit_phase(Rng &rng) {
    const double theta = 2.0 * std::numbers::pi * uniform01(rng);
    return {std::cos(theta), std::sin(theta)};
}

/// Uniform point in the closed disc of the given radius.
inline std::complex<double> uniform_in_disc(Rng &rng, double radius) {
    const double r = radius * std::sqrt(uniform01(rng));
    return r * random_unit_phase(rng);
}

inline double standard_normal(Rng &rng) {
    // Box-Muller on our own uniforms keeps streams portable.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace asq
