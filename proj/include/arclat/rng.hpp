#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace arclat {

// splitmix64: used to expand a user seed into decorrelated per-item seeds.
// Seeding mt19937_64 with consecutive integers gives visibly correlated
// streams; pushing the index through splitmix64 first avoids that.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic per-index substream. Same (seed, index) always yields the
// same generator, regardless of how many other streams were drawn.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (index + 1))));
}

// Unbiased draw from [0, n) by rejection. Used instead of
// std::uniform_int_distribution where the exact draw sequence must not
// depend on the standard library implementation.
inline std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t x = rng();
        if (x >= threshold) return x % n;
    }
}

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[bounded_uniform(rng, i)]);
}

// 53-bit uniform in [lo, hi). Hand-rolled so draw sequences do not depend on
// the standard library's distribution internals.
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

// One standard normal per call via Box-Muller (cosine branch). Two draws per
// normal; stateless, so call sites stay trivially deterministic.
inline double gauss(std::mt19937_64& rng) {
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;          // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

}  // namespace arclat
