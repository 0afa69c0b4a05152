#include "arclat/model.hpp"

#include <cmath>

#include "arclat/rng.hpp"

namespace arclat {

void validate(const ModelConfig& cfg) {
    ARCLAT_CHECK(cfg.k > 0, "base filter count must be positive");
    ARCLAT_CHECK(cfg.d > 0, "latent dimension must be positive");
    if (cfg.variational) ARCLAT_CHECK(cfg.alpha > 0.0, "KL weight must be positive");
    ARCLAT_CHECK(cfg.dropblock_rate >= 0.0 && cfg.dropblock_rate < 1.0,
                 "dropblock rate must lie in [0, 1)");
    ARCLAT_CHECK(cfg.dropblock_size >= 1 && cfg.dropblock_size <= 5,
                 "dropblock size must fit the smallest 5x5 map");
}

Tensor reparameterize(const Tensor& mu, const Tensor& log_var, const Tensor& eps) {
    if (mu.shape != log_var.shape || mu.shape != eps.shape)
        throw ShapeMismatch("reparameterize: mu " + mu.shape_str() + ", log_var " +
                            log_var.shape_str() + ", eps " + eps.shape_str());
    Tensor z(mu.shape);
    for (std::size_t i = 0; i < z.numel(); ++i)
        z.data[i] = mu.data[i] + std::exp(0.5 * log_var.data[i]) * eps.data[i];
    return z;
}

LossParts vae_loss(const Tensor& x, const Tensor& x_hat, const Tensor& mu,
                   const Tensor& log_var, double alpha) {
    if (x.shape != x_hat.shape) throw ShapeMismatch("loss: x " + x.shape_str() + ", x_hat " +
                                                    x_hat.shape_str());
    if (mu.shape != log_var.shape)
        throw ShapeMismatch("loss: mu " + mu.shape_str() + ", log_var " + log_var.shape_str());
    const std::size_t n = x.shape[0];
    ARCLAT_CHECK(n > 0, "loss needs a nonempty batch");
    if (mu.shape.size() == 2 && mu.shape[0] != n)
        throw ShapeMismatch("loss: latent batch " + mu.shape_str() + " vs data batch " +
                            x.shape_str());

    LossParts out;
    for (std::size_t i = 0; i < x.numel(); ++i) out.recon += sq(x.data[i] - x_hat.data[i]);
    out.recon *= 0.5 / static_cast<double>(n);
    for (std::size_t i = 0; i < mu.numel(); ++i) {
        const double sigma2 = std::exp(log_var.data[i]);
        out.kl += sq(mu.data[i]) + sigma2 - log_var.data[i] - 1.0;
    }
    out.kl *= 0.5 / static_cast<double>(n);
    out.total = out.recon + alpha * out.kl;
    if (!std::isfinite(out.total)) throw NonFiniteLoss("loss is not finite");
    return out;
}

LossGrads vae_loss_backward(const Tensor& x, const Tensor& x_hat, const Tensor& mu,
                            const Tensor& log_var, double alpha) {
    const double inv_n = 1.0 / static_cast<double>(x.shape[0]);
    LossGrads g;
    g.d_xhat = Tensor(x_hat.shape);
    for (std::size_t i = 0; i < x.numel(); ++i)
        g.d_xhat.data[i] = (x_hat.data[i] - x.data[i]) * inv_n;
    g.d_mu = Tensor(mu.shape);
    g.d_log_var = Tensor(log_var.shape);
    for (std::size_t i = 0; i < mu.numel(); ++i) {
        g.d_mu.data[i] = alpha * mu.data[i] * inv_n;
        g.d_log_var.data[i] = alpha * (std::exp(log_var.data[i]) - 1.0) * 0.5 * inv_n;
    }
    return g;
}

// ------------------------------------------------------- model construction

AutoencoderModel::AutoencoderModel(const ModelConfig& c) : cfg(c) {
    validate(cfg);
    const std::size_t k = cfg.k;
    const std::size_t enc_ch[5] = {kChannels, k, 2 * k, 4 * k, 8 * k};
    for (std::size_t i = 0; i < 4; ++i) {
        down[i].conv = Conv2d(enc_ch[i], enc_ch[i + 1], 3, 1, 1);
        down[i].drop = DropBlock(cfg.dropblock_rate, cfg.dropblock_size);
        down[i].bn = BatchNorm2d(enc_ch[i + 1]);
    }
    const std::size_t flat = 8 * k * 25;
    to_stats = Linear(flat, cfg.variational ? 2 * cfg.d : cfg.d);
    to_image = Linear(cfg.d, flat);
    const std::size_t dec_ch[5] = {8 * k, 4 * k, 2 * k, k, kChannels};
    for (std::size_t i = 0; i < 4; ++i) {
        up[i].conv = ConvTranspose2d(dec_ch[i], dec_ch[i + 1]);
        up[i].drop = DropBlock(cfg.dropblock_rate, cfg.dropblock_size);
        up[i].bn = BatchNorm2d(dec_ch[i + 1]);
    }
    up[3].last = true;
}

namespace {

void xavier_fill(Tensor& w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.data) v = uniform_real(rng, -lim, lim);
}

}  // namespace

void AutoencoderModel::init_weights(std::mt19937_64& rng) {
    for (auto& blk : down)
        xavier_fill(blk.conv.weight, blk.conv.in_ch * 9, blk.conv.out_ch * 9, rng);
    xavier_fill(to_stats.weight, to_stats.in_f, to_stats.out_f, rng);
    xavier_fill(to_image.weight, to_image.in_f, to_image.out_f, rng);
    for (auto& blk : up)
        xavier_fill(blk.conv.weight, blk.conv.in_ch * 9, blk.conv.out_ch * 9, rng);
}

// ----------------------------------------------------------- forward passes

Tensor AutoencoderModel::encode(const Tensor& x, Mode mode, std::mt19937_64* rng) {
    ARCLAT_CHECK(mode == Mode::Eval || rng != nullptr, "train-mode forward needs a stream");
    if (x.shape.size() != 4 || x.shape[1] != kChannels || x.shape[2] != kControlPoints ||
        x.shape[3] != kLeafPairs)
        throw ShapeMismatch("encoder input " + x.shape_str());
    trace.clear();
    trace.push_back(x.shape);

    Tensor h = x;
    for (auto& blk : down) {
        h = blk.conv.forward(h, mode);
        h = blk.pool.forward(h, mode);
        h = blk.drop.forward(h, mode, rng);
        h = blk.bn.forward(h, mode);
        h = blk.relu.forward(h, mode);
        trace.push_back(h.shape);
    }
    const std::size_t n = h.shape[0];
    Tensor flat = h.reshaped({n, 8 * cfg.k * 25});
    trace.push_back(flat.shape);
    Tensor stats = to_stats.forward(flat, mode);

    if (cfg.variational) {
        const std::size_t d = cfg.d;
        last_mu = Tensor({n, d});
        last_log_var = Tensor({n, d});
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t j = 0; j < d; ++j) {
                last_mu.at2(s, j) = stats.at2(s, j);
                last_log_var.at2(s, j) = stats.at2(s, d + j);
            }
        trace.push_back({n, 2, d});
        if (mode == Mode::Train) {
            last_eps = Tensor({n, d});
            for (auto& v : last_eps.data) v = gauss(*rng);
            last_z = reparameterize(last_mu, last_log_var, last_eps);
        } else {
            last_eps = Tensor();
            last_z = last_mu;
        }
    } else {
        last_mu = stats;
        last_log_var = Tensor({n, 0});
        last_eps = Tensor();
        last_z = stats;
    }
    trace.push_back({n, cfg.d});
    return last_z;
}

Tensor AutoencoderModel::decode_from_latent(const Tensor& z, Mode mode, std::mt19937_64* rng) {
    ARCLAT_CHECK(mode == Mode::Eval || rng != nullptr, "train-mode decode needs a stream");
    if (z.shape.size() != 2 || z.shape[1] != cfg.d)
        throw ShapeMismatch("latent input " + z.shape_str());
    const std::size_t n = z.shape[0];

    Tensor g = to_image.forward(z, mode);
    g = image_relu.forward(g, mode);
    Tensor h = g.reshaped({n, 8 * cfg.k, 5, 5});
    trace.push_back(h.shape);
    for (auto& blk : up) {
        h = blk.conv.forward(h, mode);
        h = blk.drop.forward(h, mode, rng);
        h = blk.bn.forward(h, mode);
        if (!blk.last) h = blk.relu.forward(h, mode);
        trace.push_back(h.shape);
    }
    h = head.forward(h, mode);
    trace.push_back(h.shape);
    return h;
}

Tensor AutoencoderModel::decode(const Tensor& z, Mode mode, std::mt19937_64* rng) {
    trace.clear();
    return decode_from_latent(z, mode, rng);
}

Tensor AutoencoderModel::forward(const Tensor& x, Mode mode, std::mt19937_64* rng) {
    Tensor z = encode(x, mode, rng);
    return decode_from_latent(z, mode, rng);
}

// ----------------------------------------------------------- backward pass

Tensor AutoencoderModel::backward(const Tensor& d_xhat, const Tensor& d_mu,
                                  const Tensor& d_log_var) {
    Tensor gh = head.backward(d_xhat);
    for (std::size_t i = 4; i-- > 0;) {
        if (!up[i].last) gh = up[i].relu.backward(gh);
        gh = up[i].bn.backward(gh);
        gh = up[i].drop.backward(gh);
        gh = up[i].conv.backward(gh);
    }
    const std::size_t n = gh.shape[0];
    Tensor gflat = gh.reshaped({n, 8 * cfg.k * 25});
    gflat = image_relu.backward(gflat);
    Tensor gz = to_image.backward(gflat);

    Tensor gstats;
    if (cfg.variational) {
        const std::size_t d = cfg.d;
        gstats = Tensor({n, 2 * d});
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t j = 0; j < d; ++j) {
                const double dz = gz.at2(s, j);
                double gm = dz;
                double gl = dz * last_eps.at2(s, j) * 0.5 *
                            std::exp(0.5 * last_log_var.at2(s, j));
                if (d_mu.numel()) gm += d_mu.at2(s, j);
                if (d_log_var.numel()) gl += d_log_var.at2(s, j);
                gstats.at2(s, j) = gm;
                gstats.at2(s, d + j) = gl;
            }
    } else {
        gstats = gz;
        if (d_mu.numel())
            for (std::size_t i = 0; i < gstats.numel(); ++i) gstats.data[i] += d_mu.data[i];
    }

    Tensor gback = to_stats.backward(gstats);
    gh = gback.reshaped({n, 8 * cfg.k, 5, 5});
    for (std::size_t i = 4; i-- > 0;) {
        gh = down[i].relu.backward(gh);
        gh = down[i].bn.backward(gh);
        gh = down[i].drop.backward(gh);
        gh = down[i].pool.backward(gh);
        gh = down[i].conv.backward(gh);
    }
    return gh;
}

void AutoencoderModel::zero_grad() {
    for (auto& blk : down) {
        blk.conv.zero_grad();
        blk.bn.zero_grad();
    }
    to_stats.zero_grad();
    to_image.zero_grad();
    for (auto& blk : up) {
        blk.conv.zero_grad();
        blk.bn.zero_grad();
    }
}

std::vector<ParamRef> AutoencoderModel::parameters() {
    std::vector<ParamRef> ps;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string p = "down" + std::to_string(i + 1);
        ps.push_back({p + ".conv.weight", &down[i].conv.weight, &down[i].conv.wgrad});
        ps.push_back({p + ".conv.bias", &down[i].conv.bias, &down[i].conv.bgrad});
        ps.push_back({p + ".bn.gamma", &down[i].bn.gamma, &down[i].bn.ggrad});
        ps.push_back({p + ".bn.beta", &down[i].bn.beta, &down[i].bn.bgrad});
    }
    ps.push_back({"to_stats.weight", &to_stats.weight, &to_stats.wgrad});
    ps.push_back({"to_stats.bias", &to_stats.bias, &to_stats.bgrad});
    ps.push_back({"to_image.weight", &to_image.weight, &to_image.wgrad});
    ps.push_back({"to_image.bias", &to_image.bias, &to_image.bgrad});
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string p = "up" + std::to_string(i + 1);
        ps.push_back({p + ".conv.weight", &up[i].conv.weight, &up[i].conv.wgrad});
        ps.push_back({p + ".conv.bias", &up[i].conv.bias, &up[i].conv.bgrad});
        ps.push_back({p + ".bn.gamma", &up[i].bn.gamma, &up[i].bn.ggrad});
        ps.push_back({p + ".bn.beta", &up[i].bn.beta, &up[i].bn.bgrad});
    }
    return ps;
}

std::vector<NamedTensor> AutoencoderModel::named_tensors() {
    std::vector<NamedTensor> ts;
    for (auto& p : parameters()) ts.push_back({p.name, p.value});
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string p = "down" + std::to_string(i + 1);
        ts.push_back({p + ".bn.running_mean", &down[i].bn.running_mean});
        ts.push_back({p + ".bn.running_var", &down[i].bn.running_var});
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string p = "up" + std::to_string(i + 1);
        ts.push_back({p + ".bn.running_mean", &up[i].bn.running_mean});
        ts.push_back({p + ".bn.running_var", &up[i].bn.running_var});
    }
    return ts;
}

// ----------------------------------------------------------- arc adapters

Tensor arcs_to_tensor(const std::vector<NormalizedArc>& arcs,
                      const std::vector<std::size_t>& idx) {
    ARCLAT_CHECK(!idx.empty(), "batch assembly needs at least one arc");
    Tensor t({idx.size(), kChannels, kControlPoints, kLeafPairs});
    for (std::size_t n = 0; n < idx.size(); ++n) {
        const NormalizedArc& a = arcs.at(idx[n]);
        ARCLAT_CHECK(a.positions.size() == kPlaneSize && a.gaps.size() == kPlaneSize,
                     "arc planes must be 80x80");
        for (std::size_t i = 0; i < kPlaneSize; ++i) {
            t.data[((n * kChannels + 0) * kPlaneSize) + i] = a.positions[i];
            t.data[((n * kChannels + 1) * kPlaneSize) + i] = a.gaps[i];
        }
    }
    return t;
}

NormalizedArc tensor_row_to_arc(const Tensor& t, std::size_t n, std::string id) {
    NormalizedArc a;
    a.id = std::move(id);
    a.positions.resize(kPlaneSize);
    a.gaps.resize(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) {
        a.positions[i] = t.data[((n * kChannels + 0) * kPlaneSize) + i];
        a.gaps[i] = t.data[((n * kChannels + 1) * kPlaneSize) + i];
    }
    return a;
}

}  // namespace arclat
