#include "arclat/grad.hpp"

#include <algorithm>
#include <cmath>

namespace arclat {

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteValue(what);
}

std::vector<unsigned char> relu_gates(const Tensor& pre) {
    std::vector<unsigned char> g(pre.numel());
    for (std::size_t i = 0; i < pre.numel(); ++i) g[i] = pre.data[i] >= 0.0 ? 1 : 0;
    return g;
}

// Applies a single-sample gate vector to every sample of a batch in place.
void gate_batch(Tensor& t, const std::vector<unsigned char>& gate) {
    const std::size_t per = gate.size();
    for (std::size_t s = 0; s < t.numel() / per; ++s) {
        double* p = t.data.data() + s * per;
        for (std::size_t i = 0; i < per; ++i)
            if (!gate[i]) p[i] = 0.0;
    }
}

// z -> flattened decoder output and Jacobian for either checkpoint kind.
struct LatentMap {
    bool is_pca = false;
    PcaModel pca;
    Checkpoint net;
    std::size_t dim = 0;

    explicit LatentMap(const Checkpoint& ckpt) {
        if (ckpt.kind == "pca") {
            is_pca = true;
            pca = pca_from_checkpoint(ckpt);
            dim = pca.dim();
        } else {
            net = ckpt;
            dim = ckpt.model_config.d;
        }
    }

    // Decoded arc in denormalized mm, flat layout.
    std::vector<double> decode_mm(const std::vector<double>& z,
                                  const NormalizationSpec& spec) const {
        std::vector<double> flat;
        if (is_pca) {
            flat = flatten(decode(pca, z));
        } else {
            AutoencoderModel model = model_from_checkpoint(net);
            Tensor zrow({1, dim});
            std::copy(z.begin(), z.end(), zrow.data.begin());
            flat = model.decode(zrow, Mode::Eval, nullptr).data;
        }
        for (std::size_t i = 0; i < kPlaneSize; ++i) flat[i] *= spec.position_scale;
        for (std::size_t i = kPlaneSize; i < kArcSize; ++i) flat[i] *= spec.gap_scale;
        return flat;
    }

    JacobianMatrix jacobian_mm(const std::vector<double>& z,
                               const NormalizationSpec& spec) const {
        JacobianMatrix J = is_pca ? pca_jacobian(pca) : decoder_jacobian(net, z);
        denormalize_rows(J, spec);
        return J;
    }
};

}  // namespace

JacobianMatrix matmul(const JacobianMatrix& a, const JacobianMatrix& b) {
    if (a.cols != b.rows)
        throw ShapeMismatch("jacobian product (" + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + ") * (" + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols) + ")");
    JacobianMatrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double v = a.at(i, k);
            if (v == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            double* crow = c.data.data() + i * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
        }
    return c;
}

std::vector<double> multiply(const JacobianMatrix& J, const std::vector<double>& v) {
    if (v.size() != J.cols) throw ShapeMismatch("jacobian-vector product length");
    std::vector<double> out(J.rows, 0.0);
    for (std::size_t i = 0; i < J.rows; ++i) {
        const double* row = J.data.data() + i * J.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < J.cols; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return out;
}

std::vector<double> multiply_transposed(const JacobianMatrix& J, const std::vector<double>& v) {
    if (v.size() != J.rows) throw ShapeMismatch("transposed jacobian-vector product length");
    std::vector<double> out(J.cols, 0.0);
    for (std::size_t i = 0; i < J.rows; ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        const double* row = J.data.data() + i * J.cols;
        for (std::size_t j = 0; j < J.cols; ++j) out[j] += vi * row[j];
    }
    return out;
}

JacobianMatrix pca_jacobian(const PcaModel& model) {
    const std::size_t d = model.dim();
    ARCLAT_CHECK(d > 0 && model.components.size() == d * kArcSize, "pca model is not fitted");
    JacobianMatrix J(kArcSize, d);
    for (std::size_t j = 0; j < d; ++j) {
        const double* row = model.row(j);
        for (std::size_t i = 0; i < kArcSize; ++i) J.at(i, j) = row[i];
    }
    return J;
}

JacobianMatrix layer_jacobian(const Linear& layer) {
    JacobianMatrix J(layer.out_f, layer.in_f);
    J.data = layer.weight.data;
    return J;
}

JacobianMatrix layer_jacobian(const Relu&, const Tensor& pre) {
    const std::size_t n = pre.numel();
    JacobianMatrix J(n, n);
    for (std::size_t i = 0; i < n; ++i) J.at(i, i) = pre.data[i] >= 0.0 ? 1.0 : 0.0;
    return J;
}

JacobianMatrix layer_jacobian(const ConvTranspose2d& layer, std::size_t in_h, std::size_t in_w) {
    const std::size_t oh = 2 * in_h, ow = 2 * in_w;
    JacobianMatrix J(layer.out_ch * oh * ow, layer.in_ch * in_h * in_w);
    for (std::size_t ci = 0; ci < layer.in_ch; ++ci)
        for (std::size_t y = 0; y < in_h; ++y)
            for (std::size_t x = 0; x < in_w; ++x) {
                const std::size_t col = (ci * in_h + y) * in_w + x;
                for (std::size_t co = 0; co < layer.out_ch; ++co)
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const auto oy = static_cast<std::ptrdiff_t>(2 * y + ky) - 1;
                            const auto ox = static_cast<std::ptrdiff_t>(2 * x + kx) - 1;
                            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh) || ox < 0 ||
                                ox >= static_cast<std::ptrdiff_t>(ow))
                                continue;
                            const std::size_t row =
                                (co * oh + static_cast<std::size_t>(oy)) * ow +
                                static_cast<std::size_t>(ox);
                            J.at(row, col) +=
                                layer.weight.data[((ci * layer.out_ch + co) * 3 + ky) * 3 + kx];
                        }
            }
    return J;
}

JacobianMatrix layer_jacobian(const BatchNorm2d& layer, std::size_t h, std::size_t w, Mode mode) {
    if (mode == Mode::Train)
        throw UnsupportedLayer("batchnorm has no per-sample train-mode Jacobian");
    const std::size_t n = layer.channels * h * w;
    JacobianMatrix J(n, n);
    for (std::size_t c = 0; c < layer.channels; ++c) {
        const double s = layer.gamma.data[c] / std::sqrt(layer.running_var.data[c] + layer.eps);
        for (std::size_t i = 0; i < h * w; ++i) {
            const std::size_t k = c * h * w + i;
            J.at(k, k) = s;
        }
    }
    return J;
}

JacobianMatrix layer_jacobian(const DropBlock&, std::size_t n, Mode mode) {
    if (mode == Mode::Train)
        throw UnsupportedLayer("dropblock has no deterministic train-mode Jacobian");
    JacobianMatrix J(n, n);
    for (std::size_t i = 0; i < n; ++i) J.at(i, i) = 1.0;
    return J;
}

JacobianMatrix layer_jacobian(const OutputHead&, const Tensor& pre) {
    if (pre.shape.size() != 4 || pre.shape[0] != 1 || pre.shape[1] != 2)
        throw ShapeMismatch("output head Jacobian expects a (1, 2, h, w) input");
    const std::size_t hw = pre.shape[2] * pre.shape[3];
    JacobianMatrix J(2 * hw, 2 * hw);
    for (std::size_t i = 0; i < hw; ++i) J.at(i, i) = 1.0;
    for (std::size_t i = hw; i < 2 * hw; ++i) J.at(i, i) = pre.data[i] >= 0.0 ? 1.0 : 0.0;
    return J;
}

JacobianMatrix decoder_jacobian(const Checkpoint& ckpt, const std::vector<double>& z) {
    if (ckpt.kind == "pca") {
        const PcaModel model = pca_from_checkpoint(ckpt);
        if (z.size() != model.dim())
            throw DimensionMismatch("latent point has " + std::to_string(z.size()) +
                                    " coordinates, model has " + std::to_string(model.dim()));
        require_finite(z, "latent input");
        ARCLAT_CHECK(model.dim() <= 128, "dense decoder Jacobians are limited to d <= 128");
        return pca_jacobian(model);
    }

    AutoencoderModel model = model_from_checkpoint(ckpt);
    const std::size_t d = model.cfg.d;
    if (z.size() != d)
        throw DimensionMismatch("latent point has " + std::to_string(z.size()) +
                                " coordinates, model has " + std::to_string(d));
    require_finite(z, "latent input");
    ARCLAT_CHECK(d <= 128, "dense decoder Jacobians are limited to d <= 128");
    const std::size_t k8 = 8 * model.cfg.k;

    // Value pass at z records the gate pattern the linearization is frozen
    // at: one ReLU after the latent linear, one after each of the first
    // three up blocks, and the gap-channel gate of the output head.
    Tensor zrow({1, d});
    std::copy(z.begin(), z.end(), zrow.data.begin());
    Tensor h = model.to_image.forward(zrow, Mode::Eval);
    const std::vector<unsigned char> gate_image = relu_gates(h);
    gate_batch(h, gate_image);
    h = h.reshaped({1, k8, 5, 5});
    std::vector<std::vector<unsigned char>> gate_up(3);
    for (std::size_t b = 0; b < 4; ++b) {
        h = model.up[b].conv.forward(h, Mode::Eval);
        h = model.up[b].bn.forward(h, Mode::Eval);
        if (b < 3) {
            gate_up[b] = relu_gates(h);
            gate_batch(h, gate_up[b]);
        }
    }
    const std::vector<unsigned char> gate_head = relu_gates(h);  // channel 1 rows used below
    require_finite(h.data, "decoder output");

    // Direction pass: the latent basis as a d-sample batch through the
    // bias-free linearization with the recorded gates.
    Linear lin = model.to_image;
    lin.bias = Tensor({lin.out_f});
    Tensor v({d, d});
    for (std::size_t j = 0; j < d; ++j) v.at2(j, j) = 1.0;
    v = lin.forward(v, Mode::Eval);
    gate_batch(v, gate_image);
    v = v.reshaped({d, k8, 5, 5});
    for (std::size_t b = 0; b < 4; ++b) {
        ConvTranspose2d conv = model.up[b].conv;
        conv.bias = Tensor({conv.out_ch});
        v = conv.forward(v, Mode::Eval);
        const BatchNorm2d& bn = model.up[b].bn;
        const std::size_t hw = v.shape[2] * v.shape[3];
        for (std::size_t s = 0; s < d; ++s)
            for (std::size_t c = 0; c < bn.channels; ++c) {
                const double sc = bn.gamma.data[c] / std::sqrt(bn.running_var.data[c] + bn.eps);
                double* p = v.data.data() + (s * bn.channels + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] *= sc;
            }
        if (b < 3) gate_batch(v, gate_up[b]);
    }
    // Output head: positions pass through, gaps are gated.
    const std::size_t hw = v.shape[2] * v.shape[3];
    for (std::size_t s = 0; s < d; ++s) {
        double* gap = v.data.data() + (s * 2 + 1) * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (!gate_head[hw + i]) gap[i] = 0.0;
    }

    JacobianMatrix J(kArcSize, d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < kArcSize; ++i) J.at(i, j) = v.data[j * kArcSize + i];
    require_finite(J.data, "decoder Jacobian");
    return J;
}

void denormalize_rows(JacobianMatrix& J, const NormalizationSpec& spec) {
    if (J.rows != kArcSize)
        throw ShapeMismatch("row rescale expects " + std::to_string(kArcSize) + " rows, got " +
                            std::to_string(J.rows));
    for (std::size_t i = 0; i < kPlaneSize; ++i)
        for (std::size_t j = 0; j < J.cols; ++j) J.at(i, j) *= spec.position_scale;
    for (std::size_t i = kPlaneSize; i < kArcSize; ++i)
        for (std::size_t j = 0; j < J.cols; ++j) J.at(i, j) *= spec.gap_scale;
}

std::vector<double> latent_gradient(const std::vector<double>& dose_grad,
                                    const DoseInfluence& D, const JacobianMatrix& J) {
    if (J.rows != D.total_beamlets())
        throw ShapeMismatch("jacobian has " + std::to_string(J.rows) + " beamlet rows, influence has " +
                            std::to_string(D.total_beamlets()));
    const std::vector<double> u = beamlet_gradient(D, dose_grad);  // throws on voxel mismatch
    return multiply_transposed(J, u);
}

DescentResult gradient_descend_latent(const Checkpoint& model, const ArcObjective& objective,
                                      const std::vector<double>& z0, const DescentOptions& opt) {
    const LatentMap map(model);
    if (z0.size() != map.dim)
        throw DimensionMismatch("start point has " + std::to_string(z0.size()) +
                                " coordinates, model has " + std::to_string(map.dim));
    require_finite(z0, "start point");
    const NormalizationSpec spec;

    DescentResult res;
    res.z = z0;
    std::vector<double> gx(kArcSize, 0.0);
    double f = objective(map.decode_mm(res.z, spec), &gx);
    if (!std::isfinite(f)) throw NonFiniteObjective("objective at the start point");
    res.trace.push_back(f);

    double step = opt.initial_step;
    for (std::size_t it = 0; it < opt.max_steps; ++it) {
        const JacobianMatrix J = map.jacobian_mm(res.z, spec);
        const std::vector<double> gz = multiply_transposed(J, gx);
        double norm2 = 0.0;
        for (double g : gz) norm2 += g * g;
        if (norm2 == 0.0) break;  // stationary point

        bool accepted = false;
        std::vector<double> cand(map.dim);
        std::vector<double> gc(kArcSize, 0.0);
        for (std::size_t halvings = 0; halvings <= opt.max_halvings; ++halvings) {
            for (std::size_t j = 0; j < map.dim; ++j) cand[j] = res.z[j] - step * gz[j];
            const double fc = objective(map.decode_mm(cand, spec), &gc);
            if (std::isfinite(fc) && fc < f) {
                res.z = cand;
                f = fc;
                gx = gc;
                res.trace.push_back(f);
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }
    }
    return res;
}

}  // namespace arclat
