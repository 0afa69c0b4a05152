#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numeric>

#include "arclat/common.hpp"
#include "arclat/layers.hpp"
#include "arclat/rng.hpp"

using namespace arclat;

namespace {

double dot(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

Tensor rand_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                   double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = uniform_real(rng, lo, hi);
    return t;
}

// Magnitudes bounded away from 0 so ReLU-style kinks sit far from the
// finite-difference probes.
Tensor rand_signed_margin(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) {
        const double mag = uniform_real(rng, 0.05, 1.0);
        v = (rng() & 1) ? mag : -mag;
    }
    return t;
}

// Pairwise-distinct values with spacing far above the probe step, so a
// perturbation can never flip a pooling argmax.
Tensor rand_distinct(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::vector<std::size_t> perm(t.numel());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    fisher_yates(perm, rng);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data[i] = 0.003 * static_cast<double>(perm[i]) - 0.0015 * static_cast<double>(t.numel());
    return t;
}

double rel_err(double an, double fd) {
    return std::abs(an - fd) / std::max({1.0e-6, std::abs(an), std::abs(fd)});
}

double fd_slope(const std::function<double()>& loss, double& slot) {
    const double h = 1e-5, keep = slot;
    slot = keep + h;
    const double up = loss();
    slot = keep - h;
    const double dn = loss();
    slot = keep;
    return (up - dn) / (2.0 * h);
}

// Central finite differences of loss() against each analytic coordinate,
// perturbing the matching entry of storage.
double worst_grad_err(const std::function<double()>& loss, std::vector<double>& storage,
                      const std::vector<double>& analytic) {
    REQUIRE(storage.size() == analytic.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < storage.size(); ++i)
        worst = std::max(worst, rel_err(analytic[i], fd_slope(loss, storage[i])));
    return worst;
}

}  // namespace

// ------------------------------------------------------------ basic shapes

TEST_CASE("conv with unit 1x1 kernel is the identity") {
    Conv2d conv(1, 1, 1, 1, 0);
    conv.weight.data[0] = 1.0;
    auto rng = substream(11, 0);
    Tensor x = rand_tensor({2, 1, 4, 4}, rng);
    Tensor y = conv.forward(x, Mode::Eval);
    REQUIRE(y.shape == x.shape);
    CHECK(y.data == x.data);
}

TEST_CASE("maxpool picks the window maximum") {
    Tensor x({1, 1, 2, 2});
    x.data = {1.0, 2.0, 3.0, 4.0};
    MaxPool2d pool;
    Tensor y = pool.forward(x, Mode::Eval);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 1, 1});
    CHECK(y.data[0] == 4.0);
}

TEST_CASE("layer shape ladder matches the architecture table") {
    // 80 -> 40 -> ... -> 5 on the way down, doubling back up.
    Conv2d conv(2, 16, 3, 1, 1);
    CHECK(conv.out_shape({1, 2, 80, 80}) == std::vector<std::size_t>{1, 16, 80, 80});

    auto rng = substream(12, 0);
    MaxPool2d pool;
    Tensor x = rand_tensor({1, 3, 80, 80}, rng);
    CHECK(pool.forward(x, Mode::Eval).shape == std::vector<std::size_t>{1, 3, 40, 40});

    ConvTranspose2d up(3, 2);
    Tensor z = rand_tensor({1, 3, 5, 5}, rng);
    CHECK(up.forward(z, Mode::Eval).shape == std::vector<std::size_t>{1, 2, 10, 10});
}

TEST_CASE("shape errors are reported") {
    Conv2d conv(2, 3);
    Tensor bad({1, 4, 8, 8});
    CHECK_THROWS_AS(conv.forward(bad, Mode::Eval), ShapeMismatch);

    MaxPool2d pool;
    Tensor odd({1, 1, 3, 4});
    CHECK_THROWS_AS(pool.forward(odd, Mode::Eval), ShapeMismatch);

    Linear lin(5, 2);
    Tensor wrong({3, 4});
    CHECK_THROWS_AS(lin.forward(wrong, Mode::Eval), ShapeMismatch);
}

// ------------------------------------------------------- im2col and adjoint

TEST_CASE("col2im is the adjoint of im2col") {
    auto rng = substream(13, 0);
    const std::size_t ch = 2, h = 6, w = 6, k = 3, stride = 2, pad = 1;
    const std::size_t ho = conv_out_extent(h, k, stride, pad);
    const std::size_t wo = conv_out_extent(w, k, stride, pad);
    const std::size_t rows = ch * k * k, cols_n = ho * wo;

    Tensor x = rand_tensor({ch, h, w}, rng);
    std::vector<double> c(rows * cols_n);
    for (auto& v : c) v = uniform_real(rng, -1.0, 1.0);

    std::vector<double> xc(rows * cols_n);
    im2col(x.data.data(), ch, h, w, k, stride, pad, xc.data());
    std::vector<double> back(ch * h * w);
    col2im(c.data(), ch, h, w, k, stride, pad, back.data());

    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < xc.size(); ++i) lhs += xc[i] * c[i];
    for (std::size_t i = 0; i < back.size(); ++i) rhs += back[i] * x.data[i];
    CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("transposed conv equals the transpose of the dense conv matrix") {
    const std::pair<std::size_t, std::size_t> cases[] = {{1, 1}, {2, 3}};
    for (const auto& [a, b] : cases) {
        CAPTURE(a);
        CAPTURE(b);
        const std::size_t h = 10, w = 10, ho = 5, wo = 5;
        auto rng = substream(42, a * 10 + b);

        Conv2d conv(a, b, 3, 2, 1);
        for (auto& v : conv.weight.data) v = uniform_real(rng, -1.0, 1.0);

        // Dense K by probing the conv with unit impulses.
        const std::size_t nin = a * h * w, nout = b * ho * wo;
        Eigen::MatrixXd K(nout, nin);
        for (std::size_t i = 0; i < nin; ++i) {
            Tensor e({1, a, h, w});
            e.data[i] = 1.0;
            Tensor y = conv.forward(e, Mode::Eval);
            for (std::size_t o = 0; o < nout; ++o) K(static_cast<Eigen::Index>(o),
                                                     static_cast<Eigen::Index>(i)) = y.data[o];
        }

        // Same flat kernel buffer: conv stores (b, a, 3, 3), the transposed
        // conv stores (in=b, out=a, 3, 3).
        ConvTranspose2d tconv(b, a);
        tconv.weight.data = conv.weight.data;

        Tensor z = rand_tensor({1, b, ho, wo}, rng);
        Tensor out = tconv.forward(z, Mode::Eval);
        REQUIRE(out.shape == std::vector<std::size_t>{1, a, h, w});

        Eigen::VectorXd zv(static_cast<Eigen::Index>(nout));
        for (std::size_t o = 0; o < nout; ++o) zv(static_cast<Eigen::Index>(o)) = z.data[o];
        Eigen::VectorXd ref = K.transpose() * zv;
        double worst = 0.0;
        for (std::size_t i = 0; i < nin; ++i)
            worst = std::max(worst, std::abs(out.data[i] - ref(static_cast<Eigen::Index>(i))));
        CHECK(worst < 1e-10);
    }
}

// ------------------------------------------------- finite-difference checks

TEST_CASE("conv gradients match finite differences") {
    for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
        CAPTURE(stride);
        auto rng = substream(7, stride);
        Conv2d conv(2, 3, 3, stride, 1);
        for (auto& v : conv.weight.data) v = uniform_real(rng, -0.5, 0.5);
        for (auto& v : conv.bias.data) v = uniform_real(rng, -0.5, 0.5);
        Tensor x = rand_tensor({2, 2, 6, 6}, rng);
        Tensor w = rand_tensor(conv.out_shape(x.shape), rng);

        auto loss = [&]() { return dot(conv.forward(x, Mode::Train), w); };
        loss();
        conv.zero_grad();
        Tensor gx = conv.backward(w);

        CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
        CHECK(worst_grad_err(loss, conv.weight.data, conv.wgrad.data) < 1e-4);
        CHECK(worst_grad_err(loss, conv.bias.data, conv.bgrad.data) < 1e-4);
    }
}

TEST_CASE("maxpool gradient matches finite differences") {
    auto rng = substream(8, 0);
    MaxPool2d pool;
    Tensor x = rand_distinct({2, 2, 4, 4}, rng);
    Tensor w = rand_tensor({2, 2, 2, 2}, rng);

    auto loss = [&]() { return dot(pool.forward(x, Mode::Train), w); };
    loss();
    Tensor gx = pool.backward(w);
    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
    auto rng = substream(9, 0);
    Relu relu;
    Tensor x = rand_signed_margin({3, 4}, rng);
    Tensor w = rand_tensor({3, 4}, rng);

    auto loss = [&]() { return dot(relu.forward(x, Mode::Train), w); };
    loss();
    Tensor gx = relu.backward(w);
    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
}

TEST_CASE("relu subgradient convention at zero is one") {
    Relu relu;
    Tensor x({1, 3});
    x.data = {0.0, -1.0, 2.0};
    relu.forward(x, Mode::Train);
    Tensor gy({1, 3});
    gy.data = {5.0, 5.0, 5.0};
    Tensor gx = relu.backward(gy);
    CHECK(gx.data[0] == 5.0);
    CHECK(gx.data[1] == 0.0);
    CHECK(gx.data[2] == 5.0);
}

TEST_CASE("linear gradients match finite differences") {
    auto rng = substream(10, 0);
    Linear lin(7, 5);
    for (auto& v : lin.weight.data) v = uniform_real(rng, -0.5, 0.5);
    for (auto& v : lin.bias.data) v = uniform_real(rng, -0.5, 0.5);
    Tensor x = rand_tensor({3, 7}, rng);
    Tensor w = rand_tensor({3, 5}, rng);

    auto loss = [&]() { return dot(lin.forward(x, Mode::Train), w); };
    loss();
    lin.zero_grad();
    Tensor gx = lin.backward(w);

    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
    CHECK(worst_grad_err(loss, lin.weight.data, lin.wgrad.data) < 1e-4);
    CHECK(worst_grad_err(loss, lin.bias.data, lin.bgrad.data) < 1e-4);
}

TEST_CASE("transposed conv gradients match finite differences") {
    auto rng = substream(14, 0);
    ConvTranspose2d tconv(3, 2);
    for (auto& v : tconv.weight.data) v = uniform_real(rng, -0.5, 0.5);
    for (auto& v : tconv.bias.data) v = uniform_real(rng, -0.5, 0.5);
    Tensor x = rand_tensor({2, 3, 4, 4}, rng);
    Tensor w = rand_tensor({2, 2, 8, 8}, rng);

    auto loss = [&]() { return dot(tconv.forward(x, Mode::Train), w); };
    loss();
    tconv.zero_grad();
    Tensor gx = tconv.backward(w);

    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
    CHECK(worst_grad_err(loss, tconv.weight.data, tconv.wgrad.data) < 1e-4);
    CHECK(worst_grad_err(loss, tconv.bias.data, tconv.bgrad.data) < 1e-4);
}

TEST_CASE("batchnorm gradients match finite differences") {
    auto rng = substream(15, 0);
    BatchNorm2d bn(2);
    for (auto& v : bn.gamma.data) v = uniform_real(rng, 0.5, 1.5);
    for (auto& v : bn.beta.data) v = uniform_real(rng, -0.5, 0.5);
    Tensor x = rand_tensor({3, 2, 4, 4}, rng);
    Tensor w = rand_tensor({3, 2, 4, 4}, rng);

    // Running-stat updates do not feed the loss, but keep each evaluation
    // starting from the same stats anyway.
    Tensor rm = bn.running_mean, rv = bn.running_var;
    auto loss = [&]() {
        bn.running_mean = rm;
        bn.running_var = rv;
        return dot(bn.forward(x, Mode::Train), w);
    };
    loss();
    bn.zero_grad();
    Tensor gx = bn.backward(w);

    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
    CHECK(worst_grad_err(loss, bn.gamma.data, bn.ggrad.data) < 1e-4);
    CHECK(worst_grad_err(loss, bn.beta.data, bn.bgrad.data) < 1e-4);
}

TEST_CASE("dropblock gradient matches finite differences under a fixed mask") {
    auto rng0 = substream(16, 0);
    DropBlock db(0.3, 2);
    Tensor x = rand_tensor({2, 2, 6, 6}, rng0);
    Tensor w = rand_tensor({2, 2, 6, 6}, rng0);

    // The mask depends only on the RNG draws, so reseeding per evaluation
    // holds it fixed while x is perturbed.
    auto loss = [&]() {
        auto rng = substream(99, 7);
        return dot(db.forward(x, Mode::Train, &rng), w);
    };
    loss();
    Tensor gx = db.backward(w);
    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
}

TEST_CASE("output head gradient matches finite differences") {
    auto rng = substream(17, 0);
    OutputHead head;
    Tensor x = rand_signed_margin({2, 2, 3, 3}, rng);
    Tensor w = rand_tensor({2, 2, 3, 3}, rng);

    auto loss = [&]() { return dot(head.forward(x, Mode::Train), w); };
    loss();
    Tensor gx = head.backward(w);
    CHECK(worst_grad_err(loss, x.data, gx.data) < 1e-4);
}

// ------------------------------------------------------------- batchnorm

TEST_CASE("batchnorm train mode normalizes per channel and tracks running stats") {
    auto rng = substream(18, 0);
    BatchNorm2d bn(3);
    Tensor x = rand_tensor({4, 3, 6, 6}, rng, -2.0, 5.0);
    Tensor y = bn.forward(x, Mode::Train);

    const std::size_t m = 4 * 6 * 6;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0, xmean = 0.0;
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t i = 0; i < 36; ++i) {
                mean += y.at4(s, c, i / 6, i % 6);
                xmean += x.at4(s, c, i / 6, i % 6);
            }
        mean /= static_cast<double>(m);
        xmean /= static_cast<double>(m);
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t i = 0; i < 36; ++i) var += sq(y.at4(s, c, i / 6, i % 6) - mean);
        var /= static_cast<double>(m);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-4);  // off by var/(var+eps)

        double xvar = 0.0;
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t i = 0; i < 36; ++i) xvar += sq(x.at4(s, c, i / 6, i % 6) - xmean);
        const double unbiased = xvar / static_cast<double>(m - 1);
        CHECK(bn.running_mean.data[c] == doctest::Approx(0.1 * xmean).epsilon(1e-12));
        CHECK(bn.running_var.data[c] ==
              doctest::Approx(0.9 * 1.0 + 0.1 * unbiased).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm eval mode applies the frozen affine map and is pure") {
    auto rng = substream(19, 0);
    BatchNorm2d bn(2);
    for (auto& v : bn.gamma.data) v = uniform_real(rng, 0.5, 1.5);
    for (auto& v : bn.beta.data) v = uniform_real(rng, -0.5, 0.5);
    bn.running_mean.data = {0.3, -0.7};
    bn.running_var.data = {2.0, 0.5};

    Tensor x = rand_tensor({2, 2, 3, 3}, rng);
    Tensor y = bn.forward(x, Mode::Eval);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < 9; ++i) {
                const double expect = bn.gamma.data[c] *
                                          (x.at4(s, c, i / 3, i % 3) - bn.running_mean.data[c]) /
                                          std::sqrt(bn.running_var.data[c] + bn.eps) +
                                      bn.beta.data[c];
                CHECK(y.at4(s, c, i / 3, i % 3) == doctest::Approx(expect).epsilon(1e-12));
            }

    // Eval passes leave the running statistics untouched.
    CHECK(bn.running_mean.data == std::vector<double>{0.3, -0.7});
    CHECK(bn.running_var.data == std::vector<double>{2.0, 0.5});
    Tensor y2 = bn.forward(x, Mode::Eval);
    CHECK(y.data == y2.data);
}

// ------------------------------------------------------------- dropblock

TEST_CASE("dropblock is the identity in eval mode and consumes no randomness") {
    auto rng = substream(20, 0);
    DropBlock db(0.2, 3);
    Tensor x = rand_tensor({1, 2, 8, 8}, rng);
    auto before = rng;
    Tensor y = db.forward(x, Mode::Eval, &rng);
    CHECK(y.data == x.data);
    CHECK(rng == before);
    // rate 0 is also the identity, mask-free.
    DropBlock off(0.0, 3);
    Tensor y0 = off.forward(x, Mode::Train, &rng);
    CHECK(y0.data == x.data);
}

TEST_CASE("dropblock size 1 behaves like rescaled dropout") {
    auto rng = substream(21, 0);
    DropBlock db(0.2, 1);
    Tensor x({1, 1, 100, 100});
    std::fill(x.data.begin(), x.data.end(), 1.0);
    Tensor y = db.forward(x, Mode::Train, &rng);

    std::size_t zeros = 0;
    double survivor = 0.0;
    for (double v : y.data) {
        if (v == 0.0)
            ++zeros;
        else
            survivor = v;
    }
    const double frac = static_cast<double>(zeros) / static_cast<double>(y.numel());
    CHECK(frac > 0.15);
    CHECK(frac < 0.25);
    // Survivors all carry the same rescale factor numel/kept, so the map mean
    // is exactly preserved.
    const double kept = static_cast<double>(y.numel() - zeros);
    CHECK(survivor == doctest::Approx(static_cast<double>(y.numel()) / kept).epsilon(1e-12));
    double mean = 0.0;
    for (double v : y.data) mean += v;
    mean /= static_cast<double>(y.numel());
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dropblock zeroes square blocks inside the valid-center region") {
    auto rng = substream(22, 0);
    DropBlock db(0.3, 3);
    Tensor x({1, 1, 12, 12});
    std::fill(x.data.begin(), x.data.end(), 1.0);
    Tensor y = db.forward(x, Mode::Train, &rng);

    // Every zero cell must belong to at least one fully zeroed 3x3 block
    // whose anchor lies in the valid-center grid.
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j) {
            if (y.at4(0, 0, i, j) != 0.0) continue;
            ++zeros;
            bool covered = false;
            for (std::size_t ai = (i >= 2 ? i - 2 : 0); ai <= i && ai + 2 < 12 && !covered; ++ai)
                for (std::size_t aj = (j >= 2 ? j - 2 : 0); aj <= j && aj + 2 < 12; ++aj) {
                    bool whole = true;
                    for (std::size_t u = 0; u < 3 && whole; ++u)
                        for (std::size_t v = 0; v < 3; ++v)
                            if (y.at4(0, 0, ai + u, aj + v) != 0.0) {
                                whole = false;
                                break;
                            }
                    if (whole) {
                        covered = true;
                        break;
                    }
                }
            CHECK(covered);
        }
    CHECK(zeros > 0);

    // Per-map mean preserved by the survivor rescale.
    double mean = 0.0;
    for (double v : y.data) mean += v;
    CHECK(mean / static_cast<double>(y.numel()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dropblock masks differ across feature maps") {
    auto rng = substream(23, 0);
    DropBlock db(0.3, 2);
    Tensor x({2, 3, 10, 10});
    std::fill(x.data.begin(), x.data.end(), 1.0);
    Tensor y = db.forward(x, Mode::Train, &rng);

    // With gamma ~ 0.09 over 81 anchors per map, identical masks across all
    // six maps would need astronomically unlikely draws.
    bool any_differ = false;
    for (std::size_t m = 1; m < 6 && !any_differ; ++m)
        for (std::size_t i = 0; i < 100; ++i)
            if ((y.data[m * 100 + i] == 0.0) != (y.data[i] == 0.0)) {
                any_differ = true;
                break;
            }
    CHECK(any_differ);
}

// ------------------------------------------------------------ output head

TEST_CASE("output head passes channel 0 through and clamps channel 1") {
    Tensor x({1, 2, 2, 2});
    x.data = {-1.0, 2.0, -3.0, 4.0, -5.0, 6.0, -7.0, 8.0};
    OutputHead head;
    Tensor y = head.forward(x, Mode::Eval);
    CHECK(y.data == std::vector<double>{-1.0, 2.0, -3.0, 4.0, 0.0, 6.0, 0.0, 8.0});
}
