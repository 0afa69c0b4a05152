#include "arclat/layers.hpp"

#include <Eigen/Core>
#include <cmath>

#include "arclat/common.hpp"
#include "arclat/rng.hpp"

namespace arclat {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

}  // namespace

void im2col(const double* x, std::size_t ch, std::size_t h, std::size_t w, std::size_t ksize,
            std::size_t stride, std::size_t pad, double* cols) {
    const std::size_t ho = conv_out_extent(h, ksize, stride, pad);
    const std::size_t wo = conv_out_extent(w, ksize, stride, pad);
    const std::size_t hw = ho * wo;
    std::size_t row = 0;
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t ku = 0; ku < ksize; ++ku)
            for (std::size_t kv = 0; kv < ksize; ++kv, ++row) {
                double* out = cols + row * hw;
                for (std::size_t i = 0; i < ho; ++i) {
                    const std::ptrdiff_t src_i =
                        static_cast<std::ptrdiff_t>(i * stride + ku) - static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t j = 0; j < wo; ++j) {
                        const std::ptrdiff_t src_j = static_cast<std::ptrdiff_t>(j * stride + kv) -
                                                     static_cast<std::ptrdiff_t>(pad);
                        const bool inside = src_i >= 0 && src_i < static_cast<std::ptrdiff_t>(h) &&
                                            src_j >= 0 && src_j < static_cast<std::ptrdiff_t>(w);
                        out[i * wo + j] = inside ? x[(c * h + static_cast<std::size_t>(src_i)) * w +
                                                      static_cast<std::size_t>(src_j)]
                                                 : 0.0;
                    }
                }
            }
}

void col2im(const double* cols, std::size_t ch, std::size_t h, std::size_t w, std::size_t ksize,
            std::size_t stride, std::size_t pad, double* x) {
    const std::size_t ho = conv_out_extent(h, ksize, stride, pad);
    const std::size_t wo = conv_out_extent(w, ksize, stride, pad);
    const std::size_t hw = ho * wo;
    std::fill(x, x + ch * h * w, 0.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t ku = 0; ku < ksize; ++ku)
            for (std::size_t kv = 0; kv < ksize; ++kv, ++row) {
                const double* in = cols + row * hw;
                for (std::size_t i = 0; i < ho; ++i) {
                    const std::ptrdiff_t dst_i =
                        static_cast<std::ptrdiff_t>(i * stride + ku) - static_cast<std::ptrdiff_t>(pad);
                    if (dst_i < 0 || dst_i >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t j = 0; j < wo; ++j) {
                        const std::ptrdiff_t dst_j = static_cast<std::ptrdiff_t>(j * stride + kv) -
                                                     static_cast<std::ptrdiff_t>(pad);
                        if (dst_j < 0 || dst_j >= static_cast<std::ptrdiff_t>(w)) continue;
                        x[(c * h + static_cast<std::size_t>(dst_i)) * w +
                          static_cast<std::size_t>(dst_j)] += in[i * wo + j];
                    }
                }
            }
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t ic, std::size_t oc, std::size_t k, std::size_t s, std::size_t p)
    : in_ch(ic), out_ch(oc), ksize(k), stride(s), pad(p) {
    weight = Tensor({oc, ic, k, k});
    bias = Tensor({oc});
    wgrad = Tensor({oc, ic, k, k});
    bgrad = Tensor({oc});
}

std::vector<std::size_t> Conv2d::out_shape(const std::vector<std::size_t>& in) const {
    return {in[0], out_ch, conv_out_extent(in[2], ksize, stride, pad),
            conv_out_extent(in[3], ksize, stride, pad)};
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 4 || x.shape[1] != in_ch)
        throw ShapeMismatch("conv input " + x.shape_str());
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = conv_out_extent(h, ksize, stride, pad);
    const std::size_t wo = conv_out_extent(w, ksize, stride, pad);
    const std::size_t ckk = in_ch * ksize * ksize, hw = ho * wo;

    Tensor y({n, out_ch, ho, wo});
    std::vector<double> cols(ckk * hw);
    CMapMat wm(weight.data.data(), out_ch, ckk);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data.data() + s * in_ch * h * w, in_ch, h, w, ksize, stride, pad, cols.data());
        CMapMat cm(cols.data(), ckk, hw);
        MapMat ym(y.data.data() + s * out_ch * hw, out_ch, hw);
        ym.noalias() = wm * cm;
        for (std::size_t c = 0; c < out_ch; ++c) ym.row(c).array() += bias.data[c];
    }
    if (mode == Mode::Train) cached_x = x;
    return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
    const Tensor& x = cached_x;
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = gy.shape[2], wo = gy.shape[3];
    const std::size_t ckk = in_ch * ksize * ksize, hw = ho * wo;

    Tensor gx(x.shape);
    std::vector<double> cols(ckk * hw), gcols(ckk * hw);
    CMapMat wm(weight.data.data(), out_ch, ckk);
    MapMat wg(wgrad.data.data(), out_ch, ckk);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data.data() + s * in_ch * h * w, in_ch, h, w, ksize, stride, pad, cols.data());
        CMapMat cm(cols.data(), ckk, hw);
        CMapMat gym(gy.data.data() + s * out_ch * hw, out_ch, hw);
        wg.noalias() += gym * cm.transpose();
        MapMat gcm(gcols.data(), ckk, hw);
        gcm.noalias() = wm.transpose() * gym;
        col2im(gcols.data(), in_ch, h, w, ksize, stride, pad, gx.data.data() + s * in_ch * h * w);
        // scalar loop, not an Eigen reduction: vectorized sums peel by runtime
        // pointer alignment, which breaks bitwise run-to-run determinism
        for (std::size_t c = 0; c < out_ch; ++c) {
            const double* row = gy.data.data() + (s * out_ch + c) * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += row[i];
            bgrad.data[c] += acc;
        }
    }
    return gx;
}

void Conv2d::zero_grad() {
    std::fill(wgrad.data.begin(), wgrad.data.end(), 0.0);
    std::fill(bgrad.data.begin(), bgrad.data.end(), 0.0);
}

// -------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 4 || x.shape[2] % 2 || x.shape[3] % 2)
        throw ShapeMismatch("maxpool needs even spatial extents, got " + x.shape_str());
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor y({n, c, h / 2, w / 2});
    argmax.assign(y.numel(), 0);
    std::size_t o = 0;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* plane = x.data.data() + (s * c + ch) * h * w;
            for (std::size_t i = 0; i < h; i += 2)
                for (std::size_t j = 0; j < w; j += 2, ++o) {
                    std::size_t best = i * w + j;
                    double bv = plane[best];
                    const std::size_t cand[3] = {i * w + j + 1, (i + 1) * w + j, (i + 1) * w + j + 1};
                    for (std::size_t k = 0; k < 3; ++k)
                        if (plane[cand[k]] > bv) {
                            bv = plane[cand[k]];
                            best = cand[k];
                        }
                    y.data[o] = bv;
                    argmax[o] = (s * c + ch) * h * w + best;
                }
        }
    if (mode == Mode::Eval) argmax.clear();
    in_shape = x.shape;
    return y;
}

Tensor MaxPool2d::backward(const Tensor& gy) {
    Tensor gx(in_shape);
    for (std::size_t o = 0; o < gy.numel(); ++o) gx.data[argmax[o]] += gy.data[o];
    return gx;
}

// ------------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x, Mode mode) {
    Tensor y = x;
    if (mode == Mode::Train) {
        gate.assign(x.numel(), 0);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            if (x.data[i] >= 0.0)
                gate[i] = 1;
            else
                y.data[i] = 0.0;
        }
    } else {
        for (double& v : y.data)
            if (v < 0.0) v = 0.0;
    }
    return y;
}

Tensor Relu::backward(const Tensor& gy) {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i)
        if (!gate[i]) gx.data[i] = 0.0;
    return gx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(std::size_t in, std::size_t out) : in_f(in), out_f(out) {
    weight = Tensor({out, in});
    bias = Tensor({out});
    wgrad = Tensor({out, in});
    bgrad = Tensor({out});
}

Tensor Linear::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 2 || x.shape[1] != in_f)
        throw ShapeMismatch("linear input " + x.shape_str() + ", expected (*, " +
                            std::to_string(in_f) + ")");
    const std::size_t n = x.shape[0];
    Tensor y({n, out_f});
    CMapMat xm(x.data.data(), n, in_f);
    CMapMat wm(weight.data.data(), out_f, in_f);
    MapMat ym(y.data.data(), n, out_f);
    ym.noalias() = xm * wm.transpose();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t f = 0; f < out_f; ++f) y.data[s * out_f + f] += bias.data[f];
    if (mode == Mode::Train) cached_x = x;
    return y;
}

Tensor Linear::backward(const Tensor& gy) {
    const std::size_t n = cached_x.shape[0];
    Tensor gx(cached_x.shape);
    CMapMat xm(cached_x.data.data(), n, in_f);
    CMapMat gym(gy.data.data(), n, out_f);
    CMapMat wm(weight.data.data(), out_f, in_f);
    MapMat wg(wgrad.data.data(), out_f, in_f);
    MapMat gxm(gx.data.data(), n, in_f);
    wg.noalias() += gym.transpose() * xm;
    gxm.noalias() = gym * wm;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t f = 0; f < out_f; ++f) bgrad.data[f] += gy.data[s * out_f + f];
    return gx;
}

void Linear::zero_grad() {
    std::fill(wgrad.data.begin(), wgrad.data.end(), 0.0);
    std::fill(bgrad.data.begin(), bgrad.data.end(), 0.0);
}

// -------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::size_t ic, std::size_t oc) : in_ch(ic), out_ch(oc) {
    weight = Tensor({ic, oc, 3, 3});
    bias = Tensor({oc});
    wgrad = Tensor({ic, oc, 3, 3});
    bgrad = Tensor({oc});
}

Tensor ConvTranspose2d::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 4 || x.shape[1] != in_ch)
        throw ShapeMismatch("conv transpose input " + x.shape_str());
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = 2 * h, wo = 2 * w;  // (h-1)*2 - 2 + 3 + 1
    const std::size_t ckk = out_ch * 9, hw = h * w;

    Tensor y({n, out_ch, ho, wo});
    std::vector<double> gcols(ckk * hw);
    CMapMat wm(weight.data.data(), in_ch, ckk);
    for (std::size_t s = 0; s < n; ++s) {
        CMapMat xm(x.data.data() + s * in_ch * hw, in_ch, hw);
        MapMat gcm(gcols.data(), ckk, hw);
        gcm.noalias() = wm.transpose() * xm;
        double* ydat = y.data.data() + s * out_ch * ho * wo;
        col2im(gcols.data(), out_ch, ho, wo, 3, 2, 1, ydat);
        for (std::size_t c = 0; c < out_ch; ++c) {
            double* plane = ydat + c * ho * wo;
            for (std::size_t i = 0; i < ho * wo; ++i) plane[i] += bias.data[c];
        }
    }
    if (mode == Mode::Train) cached_x = x;
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& gy) {
    const Tensor& x = cached_x;
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = 2 * h, wo = 2 * w;
    const std::size_t ckk = out_ch * 9, hw = h * w;

    Tensor gx(x.shape);
    std::vector<double> cols(ckk * hw);
    CMapMat wm(weight.data.data(), in_ch, ckk);
    MapMat wg(wgrad.data.data(), in_ch, ckk);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(gy.data.data() + s * out_ch * ho * wo, out_ch, ho, wo, 3, 2, 1, cols.data());
        CMapMat cm(cols.data(), ckk, hw);
        CMapMat xm(x.data.data() + s * in_ch * hw, in_ch, hw);
        MapMat gxm(gx.data.data() + s * in_ch * hw, in_ch, hw);
        gxm.noalias() = wm * cm;
        wg.noalias() += xm * cm.transpose();
        const double* gydat = gy.data.data() + s * out_ch * ho * wo;
        for (std::size_t c = 0; c < out_ch; ++c) {
            const double* plane = gydat + c * ho * wo;
            double acc = 0.0;
            for (std::size_t i = 0; i < ho * wo; ++i) acc += plane[i];
            bgrad.data[c] += acc;
        }
    }
    return gx;
}

void ConvTranspose2d::zero_grad() {
    std::fill(wgrad.data.begin(), wgrad.data.end(), 0.0);
    std::fill(bgrad.data.begin(), bgrad.data.end(), 0.0);
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t c) : channels(c) {
    gamma = Tensor({c});
    beta = Tensor({c});
    ggrad = Tensor({c});
    bgrad = Tensor({c});
    running_mean = Tensor({c});
    running_var = Tensor({c});
    std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
    std::fill(running_var.data.begin(), running_var.data.end(), 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 4 || x.shape[1] != channels)
        throw ShapeMismatch("batchnorm input " + x.shape_str());
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    const std::size_t m = n * h * w;  // cells per channel
    Tensor y(x.shape);

    if (mode == Mode::Eval) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double invs = 1.0 / std::sqrt(running_var.data[c] + eps);
            const double g = gamma.data[c], b = beta.data[c], mu = running_mean.data[c];
            for (std::size_t s = 0; s < n; ++s) {
                const double* xp = x.data.data() + ((s * channels + c) * h) * w;
                double* yp = y.data.data() + ((s * channels + c) * h) * w;
                for (std::size_t i = 0; i < h * w; ++i) yp[i] = g * (xp[i] - mu) * invs + b;
            }
        }
        return y;
    }

    cached_xhat = Tensor(x.shape);
    inv_std.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double* xp = x.data.data() + ((s * channels + c) * h) * w;
            for (std::size_t i = 0; i < h * w; ++i) mean += xp[i];
        }
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double* xp = x.data.data() + ((s * channels + c) * h) * w;
            for (std::size_t i = 0; i < h * w; ++i) var += sq(xp[i] - mean);
        }
        var /= static_cast<double>(m);  // biased, used for normalization
        const double invs = 1.0 / std::sqrt(var + eps);
        inv_std[c] = invs;
        const double g = gamma.data[c], b = beta.data[c];
        for (std::size_t s = 0; s < n; ++s) {
            const double* xp = x.data.data() + ((s * channels + c) * h) * w;
            double* xh = cached_xhat.data.data() + ((s * channels + c) * h) * w;
            double* yp = y.data.data() + ((s * channels + c) * h) * w;
            for (std::size_t i = 0; i < h * w; ++i) {
                xh[i] = (xp[i] - mean) * invs;
                yp[i] = g * xh[i] + b;
            }
        }
        const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
        running_mean.data[c] = (1.0 - momentum) * running_mean.data[c] + momentum * mean;
        running_var.data[c] = (1.0 - momentum) * running_var.data[c] + momentum * unbiased;
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
    const std::size_t n = gy.shape[0], h = gy.shape[2], w = gy.shape[3];
    const std::size_t m = n * h * w;
    Tensor gx(gy.shape);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double* gp = gy.data.data() + ((s * channels + c) * h) * w;
            const double* xh = cached_xhat.data.data() + ((s * channels + c) * h) * w;
            for (std::size_t i = 0; i < h * w; ++i) {
                sum_gy += gp[i];
                sum_gy_xhat += gp[i] * xh[i];
            }
        }
        ggrad.data[c] += sum_gy_xhat;
        bgrad.data[c] += sum_gy;
        const double g = gamma.data[c], invs = inv_std[c];
        const double k1 = sum_gy / static_cast<double>(m);
        const double k2 = sum_gy_xhat / static_cast<double>(m);
        for (std::size_t s = 0; s < n; ++s) {
            const double* gp = gy.data.data() + ((s * channels + c) * h) * w;
            const double* xh = cached_xhat.data.data() + ((s * channels + c) * h) * w;
            double* gxp = gx.data.data() + ((s * channels + c) * h) * w;
            for (std::size_t i = 0; i < h * w; ++i)
                gxp[i] = g * invs * (gp[i] - k1 - xh[i] * k2);
        }
    }
    return gx;
}

void BatchNorm2d::zero_grad() {
    std::fill(ggrad.data.begin(), ggrad.data.end(), 0.0);
    std::fill(bgrad.data.begin(), bgrad.data.end(), 0.0);
}

// -------------------------------------------------------------- DropBlock

Tensor DropBlock::forward(const Tensor& x, Mode mode, std::mt19937_64* rng) {
    if (mode == Mode::Eval || rate <= 0.0) {
        identity = true;
        return x;
    }
    ARCLAT_CHECK(rng != nullptr, "train-mode dropblock needs a stream");
    if (x.shape.size() != 4) throw ShapeMismatch("dropblock input " + x.shape_str());
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (size > h || size > w)
        throw ShapeMismatch("dropblock size " + std::to_string(size) + " exceeds map " +
                            x.shape_str());
    identity = false;

    const std::size_t hv = h - size + 1, wv = w - size + 1;
    const double gamma = rate / static_cast<double>(size * size) *
                         (static_cast<double>(h * w) / static_cast<double>(hv * wv));
    mask.assign(x.numel(), 1.0);
    Tensor y(x.shape);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* mp = mask.data() + (s * c + ch) * h * w;
            // seed blocks on the valid-center grid, then zero size x size
            // squares anchored there
            for (std::size_t i = 0; i < hv; ++i)
                for (std::size_t j = 0; j < wv; ++j)
                    if (uniform_real(*rng, 0.0, 1.0) < gamma)
                        for (std::size_t u = 0; u < size; ++u)
                            for (std::size_t v = 0; v < size; ++v) mp[(i + u) * w + (j + v)] = 0.0;
            std::size_t kept = 0;
            for (std::size_t i = 0; i < h * w; ++i) kept += mp[i] > 0.0;
            const double scale =
                kept ? static_cast<double>(h * w) / static_cast<double>(kept) : 0.0;
            const double* xp = x.data.data() + (s * c + ch) * h * w;
            double* yp = y.data.data() + (s * c + ch) * h * w;
            for (std::size_t i = 0; i < h * w; ++i) {
                mp[i] *= scale;
                yp[i] = xp[i] * mp[i];
            }
        }
    return y;
}

Tensor DropBlock::backward(const Tensor& gy) {
    if (identity) return gy;
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] *= mask[i];
    return gx;
}

// ------------------------------------------------------------- OutputHead

Tensor OutputHead::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != 4 || x.shape[1] != 2)
        throw ShapeMismatch("output head expects 2 channels, got " + x.shape_str());
    const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    Tensor y = x;
    if (mode == Mode::Train) gate.assign(x.numel(), 1);
    for (std::size_t s = 0; s < n; ++s) {
        double* gp = y.data.data() + (s * 2 + 1) * h * w;
        for (std::size_t i = 0; i < h * w; ++i)
            if (gp[i] < 0.0) {
                gp[i] = 0.0;
                if (mode == Mode::Train) gate[(s * 2 + 1) * h * w + i] = 0;
            }
    }
    return y;
}

Tensor OutputHead::backward(const Tensor& gy) {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i)
        if (!gate[i]) gx.data[i] = 0.0;
    return gx;
}

}  // namespace arclat
