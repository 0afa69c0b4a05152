#include "arclat/arc.hpp"

#include <cmath>

namespace arclat {

namespace {

void check_plane(const std::vector<double>& v, const char* what) {
    if (v.size() != kPlaneSize)
        throw DimensionMismatch(std::string(what) + " has " + std::to_string(v.size()) +
                                " cells, expected " + std::to_string(kPlaneSize));
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteValue(std::string(what) + " contains a non-finite cell");
}

}  // namespace

Arc make_arc(std::vector<double> positions, std::vector<double> gaps, std::string id) {
    check_plane(positions, "positions");
    check_plane(gaps, "gaps");
    for (std::size_t c = 0; c < kControlPoints; ++c)
        for (std::size_t l = 0; l < kLeafPairs; ++l)
            if (gaps[c * kLeafPairs + l] < 0.0)
                throw NegativeGap(c, l, gaps[c * kLeafPairs + l]);
    Arc a;
    a.positions = std::move(positions);
    a.gaps = std::move(gaps);
    a.id = std::move(id);
    return a;
}

Arc from_banks(const std::vector<double>& bank_a, const std::vector<double>& bank_b,
               std::string id) {
    check_plane(bank_a, "bankA");
    check_plane(bank_b, "bankB");
    std::vector<double> gaps(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) gaps[i] = bank_b[i] - bank_a[i];
    return make_arc(bank_a, std::move(gaps), std::move(id));
}

std::pair<std::vector<double>, std::vector<double>> to_banks(const Arc& arc) {
    std::vector<double> bank_b(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) bank_b[i] = arc.positions[i] + arc.gaps[i];
    return {arc.positions, bank_b};
}

NormalizedArc normalize(const Arc& arc, const NormalizationSpec& spec) {
    if (spec.position_scale <= 0.0 || spec.gap_scale <= 0.0)
        throw Error("normalization scales must be positive");
    NormalizedArc n;
    n.id = arc.id;
    n.positions.resize(kPlaneSize);
    n.gaps.resize(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) {
        n.positions[i] = arc.positions[i] / spec.position_scale;
        n.gaps[i] = arc.gaps[i] / spec.gap_scale;
    }
    return n;
}

Arc denormalize(const NormalizedArc& narc, const NormalizationSpec& spec) {
    if (spec.position_scale <= 0.0 || spec.gap_scale <= 0.0)
        throw Error("normalization scales must be positive");
    std::vector<double> positions(kPlaneSize), gaps(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) {
        positions[i] = narc.positions[i] * spec.position_scale;
        gaps[i] = narc.gaps[i] * spec.gap_scale;
    }
    return make_arc(std::move(positions), std::move(gaps), narc.id);
}

Arc denormalize_clamped(const NormalizedArc& narc, const NormalizationSpec& spec) {
    NormalizedArc clamped = narc;
    for (double& g : clamped.gaps)
        if (g < 0.0) g = 0.0;
    return denormalize(clamped, spec);
}

std::vector<double> flatten(const NormalizedArc& narc) {
    std::vector<double> flat(kArcSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) {
        flat[i] = narc.positions[i];
        flat[kPlaneSize + i] = narc.gaps[i];
    }
    return flat;
}

NormalizedArc unflatten(const std::vector<double>& flat, std::string id) {
    if (flat.size() != kArcSize)
        throw DimensionMismatch("flat arc has " + std::to_string(flat.size()) +
                                " entries, expected " + std::to_string(kArcSize));
    NormalizedArc n;
    n.id = std::move(id);
    n.positions.assign(flat.begin(), flat.begin() + kPlaneSize);
    n.gaps.assign(flat.begin() + kPlaneSize, flat.end());
    return n;
}

std::vector<double> rasterize_aperture(std::size_t l, std::size_t r, double y, std::size_t width) {
    if (l > r) throw LeafOrderViolation(static_cast<std::ptrdiff_t>(l), static_cast<std::ptrdiff_t>(r));
    if (r > width) throw IndexOutOfRange("aperture end " + std::to_string(r) +
                                         " exceeds width " + std::to_string(width));
    if (y < 0.0) throw Error("aperture intensity must be non-negative");
    std::vector<double> row(width, 0.0);
    for (std::size_t i = l; i < r; ++i) row[i] = y;
    return row;
}

}  // namespace arclat
