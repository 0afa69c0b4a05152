#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "arclat/arc.hpp"
#include "arclat/errors.hpp"

namespace arclat {

// Uniform water box. Voxels are cubes; the isocenter sits at the grid
// center. The beam rotates about the z axis, so x/y span the transverse
// plane and z is the leaf-row direction.
struct Phantom {
    std::size_t nx = 20, ny = 20, nz = 20;
    double voxel_mm = 3.3;
    double mu = 0.0049;  // water attenuation, 1/mm

    std::size_t n_voxels() const { return nx * ny * nz; }
    double extent_x() const { return static_cast<double>(nx) * voxel_mm; }
    double extent_y() const { return static_cast<double>(ny) * voxel_mm; }
    double extent_z() const { return static_cast<double>(nz) * voxel_mm; }
    std::array<double, 3> isocenter() const {
        return {0.5 * extent_x(), 0.5 * extent_y(), 0.5 * extent_z()};
    }
    std::array<double, 3> voxel_center(std::size_t ix, std::size_t iy, std::size_t iz) const {
        return {(static_cast<double>(ix) + 0.5) * voxel_mm,
                (static_cast<double>(iy) + 0.5) * voxel_mm,
                (static_cast<double>(iz) + 0.5) * voxel_mm};
    }
    std::size_t voxel_index(std::size_t ix, std::size_t iy, std::size_t iz) const {
        return (iz * ny + iy) * nx + ix;
    }
};

void validate(const Phantom& ph);

// One source orbit: gantry angles (degrees, strictly increasing), the
// source-axis distance, and the beamlet grid per control point. Rows of the
// grid are leaf pairs along z; columns run along the leaf-travel direction.
// Angle 0 puts the source on the +y side shooting down through the
// isocenter.
struct BeamGeometry {
    std::vector<double> angles_deg;
    double sad_mm = 1000.0;
    std::size_t n_leaves = 16;
    std::size_t n_columns = 16;
    double beamlet_mm = 5.0;
    bool inverse_square = true;
    bool lateral_spread = true;
    double sigma_mm = 3.0;  // lateral Gaussian spread

    std::size_t beamlets_per_cp() const { return n_leaves * n_columns; }
    std::size_t n_control_points() const { return angles_deg.size(); }
};

void validate(const BeamGeometry& g);

// Evenly spaced control points over a full-arc span. Spans under 300
// degrees are rejected; single fields and other test rigs construct
// BeamGeometry directly instead.
BeamGeometry make_arc_geometry(std::size_t n_control_points = 16, double span_deg = 360.0,
                               double start_deg = 0.0);

// One nonzero of D: dose to `voxel` per MU through `beamlet` at one control
// point. Beamlet index is row-major (leaf * n_columns + column).
struct InfluenceEntry {
    std::uint32_t beamlet = 0;
    std::uint32_t voxel = 0;
    double value = 0.0;
};

// Sparse dose influence, one triplet list per control point, each sorted by
// (beamlet, voxel). Carries the phantom and geometry it was built for.
struct DoseInfluence {
    Phantom phantom;
    BeamGeometry geometry;
    std::vector<std::vector<InfluenceEntry>> per_cp;

    std::size_t n_voxels() const { return phantom.n_voxels(); }
    std::size_t beamlets_per_cp() const { return geometry.beamlets_per_cp(); }
    std::size_t n_control_points() const { return per_cp.size(); }
    std::size_t total_beamlets() const { return n_control_points() * beamlets_per_cp(); }
};

// Pencil-beam influence: per beamlet central ray, every voxel center within
// the lateral kernel radius receives
//   exp(-mu * depth) * (SAD / (SAD + depth - depth_iso))^2 * w(r)
// where depth is measured along the ray from the phantom entry point,
// depth_iso is the entry-to-isocenter-plane depth, and w is a Gaussian of
// sigma_mm (or a half-voxel pencil cutoff when lateral_spread is off).
// Entries below 1e-6 of the beamlet maximum are dropped.
DoseInfluence build_influence(const Phantom& ph, const BeamGeometry& g);

// Binary container: magic "ARCD", version byte, little-endian u32 JSON
// header length, JSON header (phantom + geometry), then per control point a
// u32 entry count and (u32 beamlet, u32 voxel, f32 value) triplets.
void save_influence(const DoseInfluence& D, const std::string& path);
DoseInfluence load_influence(const std::string& path);

// Open fraction per beamlet of one control point, row-major
// (leaves x columns), values in [0, 1].
struct ApertureRaster {
    std::size_t leaves = 0, columns = 0;
    std::vector<double> open;
};

// Nearest-control-point resample of an 80-row arc onto the geometry's grid:
// leaf-pair rows are subsampled, left/right edges (mm, centerline origin)
// are rounded to beamlet column indices, and each row is rasterized.
std::vector<ApertureRaster> apertures_from_arc(const Arc& arc, const BeamGeometry& g);

// d_k = sum over control points and beamlets of D_ik * x_i. The raw overload
// takes the concatenated per-control-point beamlet vector; the aperture
// overload builds x as weight * open and requires nonnegative weights.
std::vector<double> compute_dose(const DoseInfluence& D, const std::vector<double>& x);
std::vector<double> compute_dose(const DoseInfluence& D,
                                 const std::vector<ApertureRaster>& apertures,
                                 const std::vector<double>& weights);

// Adjoint of compute_dose: (df/dx)_i = sum_k D_ik * voxel_grad_k.
std::vector<double> beamlet_gradient(const DoseInfluence& D,
                                     const std::vector<double>& voxel_grad);

// Per-voxel quadratic penalties: two-sided for targets, one-sided-over for
// organs at risk.
enum class Penalty : unsigned char { TwoSided, OneSidedOver };

struct DoseObjective {
    std::vector<double> target;   // Gy
    std::vector<double> weight;   // >= 0
    std::vector<Penalty> kind;
};

void validate(const DoseObjective& obj);

struct ObjectiveEval {
    double value = 0.0;
    std::vector<double> gradient;  // df/dd_k
};

// value = sum_k w_k * pen_k with pen_k = (d_k - t_k)^2 (two-sided) or
// max(0, d_k - t_k)^2 (one-sided-over); gradient is analytic.
ObjectiveEval evaluate_objective(const std::vector<double>& dose, const DoseObjective& obj);

// Spherical target (two-sided, t = 2, w = 1) at the isocenter, a concentric
// organ-at-risk shell (one-sided, t = 1, w = 0.5), body elsewhere
// (one-sided, t = 0.5, w = 0.1).
DoseObjective make_demo_objective(const Phantom& ph, double target_radius_mm = 12.0,
                                  double shell_radius_mm = 20.0);

struct RefineResult {
    std::vector<double> weights;
    std::vector<double> trace;  // objective at start and after each accepted step
};

// Projected gradient descent on the beam weights with fixed apertures (dose
// is linear in y). Backtracking step, projection y <- max(y, 0); stops when
// the relative objective change drops below 1e-6 or after 500 iterations.
// The trace is nonincreasing.
RefineResult refine_beam_weights(const DoseInfluence& D,
                                 const std::vector<ApertureRaster>& apertures,
                                 const DoseObjective& obj, const std::vector<double>& y0);

// Central-axis depth dose (normalized at 100 mm) and a lateral profile at
// profile_depth_mm (normalized on axis) for a single square open field,
// evaluated from the same primary kernel the influence builder uses. Depth
// samples run every millimetre to the phantom's y extent.
struct BeamCurves {
    std::vector<double> depth_mm, pdd;
    std::vector<double> lateral_mm, profile;
};

BeamCurves pdd_and_profile(const Phantom& ph, double field_mm = 100.0,
                           double profile_depth_mm = 100.0, bool inverse_square = true);

}  // namespace arclat
