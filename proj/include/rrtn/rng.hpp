#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rrtn {

// std::mt19937_64 output is fixed by the standard, but the standard
// distributions are not. Draws are hand-rolled on top of the raw engine so
// that seeded streams are identical across standard libraries.
using RngEngine = std::mt19937_64;

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(a) ^ b);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b) ^ c);
}

/// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform01(RngEngine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(RngEngine& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi] inclusive. Bias is negligible for the small
/// ranges used here and the mapping is stdlib-independent.
inline std::int64_t uniform_int(RngEngine& rng, std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng() % span);
}

/// Standard normal via Box-Muller (two engine draws per value).
inline double normal(RngEngine& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace rrtn
