#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "arclat/pca.hpp"
#include "arclat/rng.hpp"
#include "arclat/synthgen.hpp"

using namespace arclat;

namespace {

std::vector<NormalizedArc> norm_arcs(std::size_t n, std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.n_arcs = n;
    cfg.seed = seed;
    ArcDataset ds = generate_dataset(cfg);
    std::vector<NormalizedArc> out;
    out.reserve(n);
    for (const auto& a : ds.arcs) out.push_back(normalize(a));
    return out;
}

double max_offdiag_error(const PcaModel& m) {
    double worst = 0.0;
    for (std::size_t a = 0; a < m.dim(); ++a)
        for (std::size_t b = a; b < m.dim(); ++b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < kArcSize; ++i) dot += m.row(a)[i] * m.row(b)[i];
            worst = std::max(worst, std::abs(dot - (a == b ? 1.0 : 0.0)));
        }
    return worst;
}

}  // namespace

TEST_CASE("identical arcs give all-zero singular values and a usable basis") {
    auto arcs = norm_arcs(1, 3);
    std::vector<NormalizedArc> same(5, arcs[0]);
    PcaModel m = fit_pca(same, 3);
    for (double s : m.singular_values) CHECK(s == 0.0);
    CHECK(max_offdiag_error(m) < 1e-8);
    // encoding any of the identical arcs gives the zero vector
    for (double z : encode(m, arcs[0])) CHECK(std::abs(z) < 1e-9);
}

TEST_CASE("two arcs give exactly one nonzero component, along their difference") {
    auto arcs = norm_arcs(2, 8);
    PcaModel m = fit_pca(arcs, 2);
    CHECK(m.singular_values[0] > 0.0);
    CHECK(m.singular_values[1] == 0.0);

    auto f0 = flatten(arcs[0]);
    auto f1 = flatten(arcs[1]);
    double dot = 0.0, nd = 0.0;
    for (std::size_t i = 0; i < kArcSize; ++i) {
        const double diff = f0[i] - f1[i];
        dot += m.row(0)[i] * diff;
        nd += diff * diff;
    }
    CHECK(std::abs(std::abs(dot) / std::sqrt(nd) - 1.0) < 1e-8);
}

TEST_CASE("components are orthonormal on random data") {
    auto arcs = norm_arcs(20, 13);
    PcaModel m = fit_pca(arcs, 12);
    CHECK(max_offdiag_error(m) < 1e-8);
    for (std::size_t j = 1; j < m.dim(); ++j)
        CHECK(m.singular_values[j] <= m.singular_values[j - 1]);
}

TEST_CASE("encode of the mean is zero and decode of zero is the mean") {
    auto arcs = norm_arcs(12, 21);
    PcaModel m = fit_pca(arcs, 6);
    NormalizedArc mean_arc = unflatten(m.mean);
    for (double z : encode(m, mean_arc)) CHECK(std::abs(z) < 1e-12);
    NormalizedArc dec = decode(m, std::vector<double>(6, 0.0));
    auto flat = flatten(dec);
    for (std::size_t i = 0; i < kArcSize; ++i) CHECK(flat[i] == m.mean[i]);
    CHECK_THROWS_AS(decode(m, std::vector<double>(5, 0.0)), DimensionMismatch);
}

TEST_CASE("projection through the model matches a least-squares oracle") {
    // one arc from each of n independent seeds, so the sample matrix is
    // well conditioned and both projection routes agree tightly
    const std::size_t n = 6;
    std::vector<NormalizedArc> arcs;
    for (std::size_t s = 0; s < n; ++s) arcs.push_back(norm_arcs(1, 31 + s)[0]);
    PcaModel m = fit_pca(arcs, n - 1);  // full centered rank

    // x inside the training span: mean + combination of centered samples
    Eigen::MatrixXd xt(kArcSize, n);  // centered samples as columns
    std::vector<std::vector<double>> flats;
    for (std::size_t s = 0; s < n; ++s) flats.push_back(flatten(arcs[s]));
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < kArcSize; ++i) xt(i, s) = flats[s][i] - m.mean[i];

    auto rng = substream(77, 0);
    std::vector<double> x(kArcSize);
    Eigen::VectorXd w(n);
    for (std::size_t s = 0; s < n; ++s)
        w(s) = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    Eigen::VectorXd y = xt * w;
    for (std::size_t i = 0; i < kArcSize; ++i) x[i] = m.mean[i] + y(i);

    NormalizedArc round = decode(m, encode(m, unflatten(x)));
    auto rf = flatten(round);
    for (std::size_t i = 0; i < kArcSize; ++i) CHECK(std::abs(rf[i] - x[i]) < 1e-6);

    // independent oracle: least-squares projection onto the span of the
    // centered samples, via QR on the raw data (no Gram matrix involved).
    // Centered samples sum to zero, so the first n-1 of them already span
    // the space and give a full-column-rank system.
    Eigen::MatrixXd xt_basis = xt.leftCols(n - 1);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xt_basis);
    Eigen::VectorXd proj = xt_basis * qr.solve(y);
    for (std::size_t i = 0; i < kArcSize; ++i)
        CHECK(std::abs((rf[i] - m.mean[i]) - proj(i)) < 1e-6);

    // and an out-of-span point projects to the same place by both routes
    std::vector<double> xo = x;
    for (std::size_t i = 0; i < kArcSize; ++i)
        xo[i] += static_cast<double>(rng() >> 11) * 0x1.0p-53 * 0.2 - 0.1;
    NormalizedArc po = decode(m, encode(m, unflatten(xo)));
    auto pf = flatten(po);
    Eigen::VectorXd yo(kArcSize);
    for (std::size_t i = 0; i < kArcSize; ++i) yo(i) = xo[i] - m.mean[i];
    Eigen::VectorXd proj_o = xt_basis * qr.solve(yo);
    for (std::size_t i = 0; i < kArcSize; ++i)
        CHECK(std::abs((pf[i] - m.mean[i]) - proj_o(i)) < 1e-6);
}

TEST_CASE("decode is linear around the mean") {
    auto arcs = norm_arcs(10, 41);
    PcaModel m = fit_pca(arcs, 4);
    auto rng = substream(5, 0);
    auto draw = [&] {
        std::vector<double> z(4);
        for (double& v : z) v = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 4.0 - 2.0;
        return z;
    };
    const auto z1 = draw(), z2 = draw();
    const double a = 0.75, b = -1.5;
    std::vector<double> zc(4);
    for (std::size_t j = 0; j < 4; ++j) zc[j] = a * z1[j] + b * z2[j];
    auto d1 = flatten(decode(m, z1)), d2 = flatten(decode(m, z2)), dc = flatten(decode(m, zc));
    for (std::size_t i = 0; i < kArcSize; ++i) {
        const double lhs = dc[i] - m.mean[i];
        const double rhs = a * (d1[i] - m.mean[i]) + b * (d2[i] - m.mean[i]);
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("truncation consistency across fit dimensions") {
    auto arcs = norm_arcs(24, 51);
    PcaModel small = fit_pca(arcs, 4);
    PcaModel large = fit_pca(arcs, 9);
    for (std::size_t j = 0; j < 4; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < kArcSize; ++i) dot += small.row(j)[i] * large.row(j)[i];
        CHECK(std::abs(std::abs(dot) - 1.0) < 1e-8);
        CHECK(small.singular_values[j] == doctest::Approx(large.singular_values[j]).epsilon(1e-10));
    }
    PcaModel cut = truncate(large, 4);
    CHECK(cut.dim() == 4);
    CHECK_THROWS_AS(truncate(small, 5), Error);
}

TEST_CASE("median error: subset of span is zero, single bad cell is ignored") {
    auto arcs = norm_arcs(1, 61);
    std::vector<NormalizedArc> same(4, arcs[0]);
    PcaModel m = fit_pca(same, 2);
    CHECK(median_abs_error(m, same) == 0.0);

    NormalizedArc off = arcs[0];
    off.positions[137] += 2.0 / kPositionScale;  // 2 mm at one cell
    CHECK(median_abs_error(m, {off}) == 0.0);
}

TEST_CASE("dimension sweep reuses one fit and is monotone on the fitting set") {
    auto arcs = norm_arcs(24, 71);
    std::vector<std::size_t> dims{0, 1, 2, 4, 8, 16, 23};
    auto curve = dimension_sweep(arcs, dims);
    REQUIRE(curve.size() == dims.size());
    for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k].second <= curve[k - 1].second + 1e-12);

    // full centered rank reaches zero
    CHECK(curve.back().first == 23);
    CHECK(curve.back().second <= 1e-6);

    // d=0 is the predict-the-mean baseline
    PcaModel m0 = fit_pca(arcs, 0);
    CHECK(curve.front().second == doctest::Approx(median_abs_error(m0, arcs)).epsilon(1e-12));
    CHECK(m0.dim() == 0);

    CHECK_THROWS_AS(dimension_sweep(arcs, {4, 2}), Error);
    CHECK_THROWS_AS(fit_pca(std::vector<NormalizedArc>(1, arcs[0]), 1), InsufficientData);
    CHECK_THROWS_AS(fit_pca(arcs, 25), Error);
    CHECK_THROWS_AS(median_abs_error(m0, {}), EmptyDataset);
}
