#include "arclat/pca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace arclat {

namespace {

// Two rounds of modified Gram-Schmidt. One round leaves O(eps * kappa)
// cross-talk when rows came out of a badly scaled Gram eigenproblem; the
// second round pushes it to machine precision.
void orthonormalize_rows(std::vector<double>& rows, std::size_t d) {
    for (int round = 0; round < 2; ++round) {
        for (std::size_t j = 0; j < d; ++j) {
            double* vj = rows.data() + j * kArcSize;
            for (std::size_t k = 0; k < j; ++k) {
                const double* vk = rows.data() + k * kArcSize;
                double dot = 0.0;
                for (std::size_t i = 0; i < kArcSize; ++i) dot += vj[i] * vk[i];
                for (std::size_t i = 0; i < kArcSize; ++i) vj[i] -= dot * vk[i];
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < kArcSize; ++i) norm += vj[i] * vj[i];
            norm = std::sqrt(norm);
            if (norm < 1e-300) throw Error("orthonormalization collapsed a component row");
            for (std::size_t i = 0; i < kArcSize; ++i) vj[i] /= norm;
        }
    }
}

// Deterministic sign: make the largest-magnitude entry positive (first such
// index on ties).
void fix_signs(std::vector<double>& rows, std::size_t d) {
    for (std::size_t j = 0; j < d; ++j) {
        double* v = rows.data() + j * kArcSize;
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < kArcSize; ++i)
            if (std::abs(v[i]) > best) {
                best = std::abs(v[i]);
                arg = i;
            }
        if (v[arg] < 0.0)
            for (std::size_t i = 0; i < kArcSize; ++i) v[i] = -v[i];
    }
}

// Extend rows[0..have) to d orthonormal rows using canonical basis vectors.
void complete_basis(std::vector<double>& rows, std::size_t have, std::size_t d) {
    std::size_t next_axis = 0;
    for (std::size_t j = have; j < d; ++j) {
        double* vj = rows.data() + j * kArcSize;
        bool found = false;
        for (; next_axis < kArcSize && !found; ++next_axis) {
            std::fill(vj, vj + kArcSize, 0.0);
            vj[next_axis] = 1.0;
            for (std::size_t k = 0; k < j; ++k) {
                const double* vk = rows.data() + k * kArcSize;
                const double dot = vk[next_axis];
                for (std::size_t i = 0; i < kArcSize; ++i) vj[i] -= dot * vk[i];
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < kArcSize; ++i) norm += vj[i] * vj[i];
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::size_t i = 0; i < kArcSize; ++i) vj[i] /= norm;
                found = true;
            }
        }
        if (!found) throw Error("failed to complete orthonormal basis");
    }
}

double pooled_median(std::vector<double>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + n / 2;
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace

PcaModel fit_pca(const std::vector<NormalizedArc>& data, std::size_t d) {
    const std::size_t n = data.size();
    if (n < 2) throw InsufficientData("PCA needs at least 2 arcs, got " + std::to_string(n));
    if (d > std::min(n, kArcSize))
        throw Error("PCA dimension " + std::to_string(d) + " exceeds min(n, " +
                    std::to_string(kArcSize) + ")");

    Eigen::MatrixXd x(n, kArcSize);
    double max_abs = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const auto flat = flatten(data[s]);
        for (std::size_t i = 0; i < kArcSize; ++i) {
            x(s, i) = flat[i];
            max_abs = std::max(max_abs, std::abs(flat[i]));
        }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    const Eigen::MatrixXd gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw Error("Gram eigendecomposition failed");

    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + kArcSize);
    model.components.assign(d * kArcSize, 0.0);
    model.singular_values.assign(d, 0.0);

    // eigenvalues come back ascending; walk from the top. Variance at the
    // level of centering round-off counts as zero, so a dataset of
    // identical arcs reports exact zeros instead of eps-sized garbage.
    const double eps = std::numeric_limits<double>::epsilon();
    const double round_floor =
        16.0 * static_cast<double>(n) * static_cast<double>(kArcSize) * sq(eps * max_abs);
    const double lam_max = std::max(0.0, eig.eigenvalues()(n - 1));
    const double lam_tol = std::max(lam_max * 1e-12, round_floor);
    std::size_t kept = 0;
    for (std::size_t j = 0; j < d && j < n; ++j) {
        const double lam = eig.eigenvalues()(n - 1 - j);
        if (lam <= lam_tol) break;
        model.singular_values[j] = std::sqrt(lam);
        const Eigen::VectorXd v = x.transpose() * eig.eigenvectors().col(n - 1 - j) / model.singular_values[j];
        for (std::size_t i = 0; i < kArcSize; ++i) model.components[j * kArcSize + i] = v(i);
        ++kept;
    }
    orthonormalize_rows(model.components, kept);
    complete_basis(model.components, kept, d);
    fix_signs(model.components, d);
    return model;
}

void reorthonormalize(PcaModel& model) {
    orthonormalize_rows(model.components, model.dim());
}

PcaModel truncate(const PcaModel& model, std::size_t d) {
    if (d > model.dim())
        throw Error("cannot truncate to " + std::to_string(d) + " from " +
                    std::to_string(model.dim()));
    PcaModel out;
    out.mean = model.mean;
    out.components.assign(model.components.begin(), model.components.begin() + d * kArcSize);
    out.singular_values.assign(model.singular_values.begin(), model.singular_values.begin() + d);
    return out;
}

std::vector<double> encode(const PcaModel& model, const NormalizedArc& arc) {
    const auto flat = flatten(arc);
    std::vector<double> z(model.dim(), 0.0);
    for (std::size_t j = 0; j < model.dim(); ++j) {
        const double* v = model.row(j);
        double dot = 0.0;
        for (std::size_t i = 0; i < kArcSize; ++i) dot += v[i] * (flat[i] - model.mean[i]);
        z[j] = dot;
    }
    return z;
}

NormalizedArc decode(const PcaModel& model, const std::vector<double>& z) {
    if (z.size() != model.dim())
        throw DimensionMismatch("latent has " + std::to_string(z.size()) + " entries, model dim is " +
                                std::to_string(model.dim()));
    std::vector<double> flat = model.mean;
    for (std::size_t j = 0; j < model.dim(); ++j) {
        const double* v = model.row(j);
        for (std::size_t i = 0; i < kArcSize; ++i) flat[i] += z[j] * v[i];
    }
    return unflatten(flat);
}

double median_abs_error_mm(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& recon,
                           const NormalizationSpec& spec) {
    if (truth.empty()) throw EmptyDataset();
    if (truth.size() != recon.size()) throw DimensionMismatch("paired datasets differ in size");
    std::vector<double> errs;
    errs.reserve(truth.size() * kArcSize);
    for (std::size_t s = 0; s < truth.size(); ++s) {
        if (truth[s].size() != kArcSize || recon[s].size() != kArcSize)
            throw DimensionMismatch("flat arc size");
        for (std::size_t i = 0; i < kArcSize; ++i) {
            const double scale = i < kPlaneSize ? spec.position_scale : spec.gap_scale;
            errs.push_back(std::abs(truth[s][i] - recon[s][i]) * scale);
        }
    }
    return pooled_median(errs);
}

double median_abs_error(const PcaModel& model, const std::vector<NormalizedArc>& data,
                        const NormalizationSpec& spec) {
    if (data.empty()) throw EmptyDataset();
    std::vector<std::vector<double>> truth, recon;
    truth.reserve(data.size());
    recon.reserve(data.size());
    for (const auto& arc : data) {
        truth.push_back(flatten(arc));
        recon.push_back(flatten(decode(model, encode(model, arc))));
    }
    return median_abs_error_mm(truth, recon, spec);
}

std::vector<std::pair<std::size_t, double>> dimension_sweep(
    const std::vector<NormalizedArc>& data, const std::vector<std::size_t>& dims,
    const NormalizationSpec& spec) {
    if (dims.empty()) throw Error("dimension list is empty");
    if (!std::is_sorted(dims.begin(), dims.end())) throw Error("dims must be ascending");
    const PcaModel full = fit_pca(data, dims.back());
    std::vector<std::pair<std::size_t, double>> curve;
    curve.reserve(dims.size());
    for (std::size_t d : dims)
        curve.emplace_back(d, median_abs_error(truncate(full, d), data, spec));
    return curve;
}

}  // namespace arclat
