#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "arclat/arc.hpp"

namespace arclat {

// Linear subspace model over flattened normalized arcs.
// components is d x kArcSize, row-major; rows are orthonormal eigenarcs,
// ordered by descending singular value.
struct PcaModel {
    std::vector<double> mean;             // kArcSize
    std::vector<double> components;       // dim * kArcSize
    std::vector<double> singular_values;  // dim, descending, >= 0

    std::size_t dim() const { return singular_values.size(); }
    const double* row(std::size_t j) const { return components.data() + j * kArcSize; }
};

// Top-d right singular vectors of the centered data matrix, computed via
// the n x n Gram matrix. Trailing zero-variance directions are filled with
// an orthonormal completion so dim is always exactly d.
PcaModel fit_pca(const std::vector<NormalizedArc>& data, std::size_t d);

// First d rows/values of a larger model; shares no state with the input.
PcaModel truncate(const PcaModel& model, std::size_t d);

// Re-orthonormalizes the component rows in place. Round trips through
// 32-bit storage degrade orthonormality to ~1e-8; loaders call this to
// restore it to working precision.
void reorthonormalize(PcaModel& model);

std::vector<double> encode(const PcaModel& model, const NormalizedArc& arc);
NormalizedArc decode(const PcaModel& model, const std::vector<double>& z);

// Pooled median of per-cell absolute reconstruction errors, reported in mm
// (channel scales applied to the normalized residuals).
double median_abs_error(const PcaModel& model, const std::vector<NormalizedArc>& data,
                        const NormalizationSpec& spec = {});

// One fit at max(dims), truncated per entry. dims must be ascending.
std::vector<std::pair<std::size_t, double>> dimension_sweep(
    const std::vector<NormalizedArc>& data, const std::vector<std::size_t>& dims,
    const NormalizationSpec& spec = {});

// Pooled cellwise |a - b| median in mm between paired normalized arcs.
// Shared by the PCA and network evaluation paths.
double median_abs_error_mm(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& recon,
                           const NormalizationSpec& spec = {});

}  // namespace arclat
