#pragma once

#include <string>
#include <utility>
#include <vector>

#include "arclat/common.hpp"
#include "arclat/errors.hpp"

namespace arclat {

// One VMAT arc: 80 control points x 80 leaf pairs, two channels.
// positions[c*80+l] is the signed bank-A leaf-end coordinate (mm, relative
// to the field centerline), gaps[c*80+l] the separation to bank B (mm, >= 0).
struct Arc {
    std::vector<double> positions;  // kPlaneSize, control-point-major
    std::vector<double> gaps;       // kPlaneSize, control-point-major
    std::string id;

    double pos(std::size_t c, std::size_t l) const { return positions[c * kLeafPairs + l]; }
    double gap(std::size_t c, std::size_t l) const { return gaps[c * kLeafPairs + l]; }
    double& pos(std::size_t c, std::size_t l) { return positions[c * kLeafPairs + l]; }
    double& gap(std::size_t c, std::size_t l) { return gaps[c * kLeafPairs + l]; }
};

// Same layout, values divided by the channel scales. Kept as a distinct type
// so model-space and millimetre-space arcs cannot be mixed up silently.
struct NormalizedArc {
    std::vector<double> positions;
    std::vector<double> gaps;
    std::string id;
};

struct NormalizationSpec {
    double position_scale = kPositionScale;
    double gap_scale = kGapScale;
};

// Validates shape and the non-abutting constraint; throws NegativeGap /
// DimensionMismatch / NonFiniteValue. Every construction path funnels here
// so no Arc with a negative gap can exist.
Arc make_arc(std::vector<double> positions, std::vector<double> gaps, std::string id);

Arc from_banks(const std::vector<double>& bank_a, const std::vector<double>& bank_b,
               std::string id = "");

// bankA = positions, bankB = positions + gaps.
std::pair<std::vector<double>, std::vector<double>> to_banks(const Arc& arc);

NormalizedArc normalize(const Arc& arc, const NormalizationSpec& spec = {});
Arc denormalize(const NormalizedArc& narc, const NormalizationSpec& spec = {});

// Same as denormalize but clamps the gap channel at 0 first. Model
// reconstructions are not guaranteed feasible; this is the bridge back.
Arc denormalize_clamped(const NormalizedArc& narc, const NormalizationSpec& spec = {});

// Flat layout used by PCA and the networks: [0, 6400) positions,
// [6400, 12800) gaps, both control-point-major.
std::vector<double> flatten(const NormalizedArc& narc);
NormalizedArc unflatten(const std::vector<double>& flat, std::string id = "");

// One raster row for one leaf pair: y on [l, r), 0 elsewhere. The Heaviside
// convention theta(0)=1 makes l==r the closed-pair all-zero case.
std::vector<double> rasterize_aperture(std::size_t l, std::size_t r, double y, std::size_t width);

}  // namespace arclat
