#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace arclat {

// Arc image geometry. An arc is stored as a 2-channel 80x80 image:
// channel 0 holds leading-leaf positions, channel 1 holds gaps, rows are
// control points, columns are leaf pairs.
inline constexpr std::size_t kControlPoints = 80;
inline constexpr std::size_t kLeafPairs = 80;
inline constexpr std::size_t kChannels = 2;
inline constexpr std::size_t kPlaneSize = kControlPoints * kLeafPairs;
inline constexpr std::size_t kArcSize = kChannels * kPlaneSize;

// Fixed normalization constants (millimetres). Positions are divided by
// kPositionScale, gaps by kGapScale, when mapping to model space.
inline constexpr double kPositionScale = 84.0;
inline constexpr double kGapScale = 132.8;

// FNV-1a 64-bit. Used for config digests stamped into result headers.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

// Shortest round-trip decimal for a double. %.17g always round-trips; this
// is what every CSV writer uses so identical runs produce identical bytes.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline double sq(double x) { return x * x; }

inline double median_of_sorted(const std::vector<double>& s) {
    const std::size_t n = s.size();
    if (n == 0) return std::nan("");
    if (n % 2 == 1) return s[n / 2];
    return 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

}  // namespace arclat
