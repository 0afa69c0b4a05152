#include "arclat/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "arclat/rng.hpp"

namespace arclat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double eval_sinusoids(const std::vector<Sinusoid>& waves, double t80) {
    double v = 0.0;
    for (const auto& w : waves) v += w.amp * std::sin(kTwoPi * w.cycles * t80 + w.phase);
    return v;
}

double eval_bumps(const std::vector<Bump>& bumps, double l) {
    double v = 0.0;
    for (const auto& b : bumps) v += b.amp * std::exp(-0.5 * sq((l - b.center) / b.width));
    return v;
}

double eval_bump(const Bump& b, double l) {
    return b.amp * std::exp(-0.5 * sq((l - b.center) / b.width));
}

// Clamp per-step increments along both axes. Each pass maps values through
// a composition of 1-Lipschitz (sup-norm) updates, so the second pass
// cannot break the bound the first pass established.
void enforce_smoothness(std::vector<double>& plane, double max_dc, double max_dl) {
    for (std::size_t l = 0; l < kLeafPairs; ++l)
        for (std::size_t c = 1; c < kControlPoints; ++c) {
            double& cur = plane[c * kLeafPairs + l];
            const double prev = plane[(c - 1) * kLeafPairs + l];
            cur = prev + std::clamp(cur - prev, -max_dc, max_dc);
        }
    for (std::size_t c = 0; c < kControlPoints; ++c)
        for (std::size_t l = 1; l < kLeafPairs; ++l) {
            double& cur = plane[c * kLeafPairs + l];
            const double prev = plane[c * kLeafPairs + l - 1];
            cur = prev + std::clamp(cur - prev, -max_dl, max_dl);
        }
}

// Per-arc parameter jitter around the site profile. Bump centers move by
// whole leaves, which is what makes the arc family nonlinear in pixel
// space rather than a linear span of site templates.
SiteProfile jitter_profile(const SiteProfile& site, std::mt19937_64& rng) {
    SiteProfile p = site;
    for (auto& w : p.center_trajectory) {
        w.amp *= uniform_real(rng, 0.85, 1.15);
        w.phase += uniform_real(rng, -0.5, 0.5);
    }
    for (auto& b : p.leaf_envelope) {
        b.amp *= uniform_real(rng, 0.85, 1.15);
        b.center += uniform_real(rng, -6.0, 6.0);
        b.width *= uniform_real(rng, 0.9, 1.1);
    }
    p.env_rms *= uniform_real(rng, 0.92, 1.08);
    p.width_base *= uniform_real(rng, 0.85, 1.15);
    for (auto& w : p.width_waves) {
        w.amp *= uniform_real(rng, 0.8, 1.2);
        w.phase += uniform_real(rng, -0.5, 0.5);
    }
    p.opening_base += uniform_real(rng, -0.06, 0.06);
    for (auto& b : p.opening_bumps) {
        b.amp *= uniform_real(rng, 0.8, 1.2);
        b.center += uniform_real(rng, -5.0, 5.0);
        b.width *= uniform_real(rng, 0.9, 1.1);
    }
    p.inter_c.amp *= uniform_real(rng, 0.7, 1.3);
    p.inter_c.phase += uniform_real(rng, -0.6, 0.6);
    p.inter_l.amp *= uniform_real(rng, 0.7, 1.3);
    p.inter_l.center += uniform_real(rng, -8.0, 8.0);
    return p;
}

Arc sample_arc(const SiteProfile& site, std::mt19937_64&& rng, const GeneratorConfig& cfg,
               std::string id) {
    const SiteProfile p = jitter_profile(site, rng);

    std::vector<double> traj(kControlPoints), width(kControlPoints), inter_c(kControlPoints);
    for (std::size_t c = 0; c < kControlPoints; ++c) {
        const double t = static_cast<double>(c) / kControlPoints;
        traj[c] = eval_sinusoids(p.center_trajectory, t);
        width[c] = std::max(0.0, p.width_base + eval_sinusoids(p.width_waves, t));
        inter_c[c] = p.inter_c.amp * std::sin(kTwoPi * p.inter_c.cycles * t + p.inter_c.phase);
    }
    std::vector<double> env(kLeafPairs), opening(kLeafPairs), inter_l(kLeafPairs);
    for (std::size_t l = 0; l < kLeafPairs; ++l) {
        env[l] = eval_bumps(p.leaf_envelope, static_cast<double>(l));
        opening[l] = std::clamp(p.opening_base + eval_bumps(p.opening_bumps, static_cast<double>(l)),
                                0.0, 1.0);
        inter_l[l] = eval_bump(p.inter_l, static_cast<double>(l));
    }
    // Center the envelope so the field sits on the centerline and pin its
    // RMS to the site target; keeps the dataset-level |position| median set
    // by shape, not by how the random bump amplitudes happened to add up.
    const double env_mean = std::accumulate(env.begin(), env.end(), 0.0) / kLeafPairs;
    for (double& e : env) e -= env_mean;
    double env_rms = 0.0;
    for (double e : env) env_rms += e * e;
    env_rms = std::sqrt(env_rms / kLeafPairs);
    if (env_rms > 1e-9) {
        const double scale = std::min(2.0, p.env_rms / env_rms);
        for (double& e : env) e *= scale;
    }

    std::vector<double> pos(kPlaneSize), bank_b(kPlaneSize);
    for (std::size_t c = 0; c < kControlPoints; ++c)
        for (std::size_t l = 0; l < kLeafPairs; ++l) {
            const double v = traj[c] + env[l] + inter_c[c] * inter_l[l];
            pos[c * kLeafPairs + l] = v;
            bank_b[c * kLeafPairs + l] = v + width[c] * opening[l];
        }

    enforce_smoothness(pos, cfg.max_step_cp, cfg.max_step_leaf);
    enforce_smoothness(bank_b, cfg.max_step_cp, cfg.max_step_leaf);

    std::vector<double> gaps(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) gaps[i] = std::max(0.0, bank_b[i] - pos[i]);
    return make_arc(std::move(pos), std::move(gaps), std::move(id));
}

}  // namespace

SiteProfile sample_site_profile(std::mt19937_64& rng) {
    SiteProfile p;
    const std::size_t n_traj = 1 + bounded_uniform(rng, 2);
    for (std::size_t j = 0; j < n_traj; ++j)
        p.center_trajectory.push_back({uniform_real(rng, 2.5, 6.5),
                                       static_cast<double>(1 + bounded_uniform(rng, 3)),
                                       uniform_real(rng, 0.0, kTwoPi)});
    const std::size_t n_env = 3 + bounded_uniform(rng, 2);
    for (std::size_t j = 0; j < n_env; ++j) {
        const double mag = uniform_real(rng, 11.0, 28.0);
        p.leaf_envelope.push_back({rng() & 1 ? mag : -mag, uniform_real(rng, 8.0, 72.0),
                                   uniform_real(rng, 10.0, 26.0)});
    }
    p.env_rms = uniform_real(rng, 11.0, 13.5);
    p.width_base = uniform_real(rng, 36.0, 40.0);
    const std::size_t n_w = 1 + bounded_uniform(rng, 2);
    for (std::size_t j = 0; j < n_w; ++j)
        p.width_waves.push_back({uniform_real(rng, 2.0, 5.0),
                                 static_cast<double>(1 + bounded_uniform(rng, 2)),
                                 uniform_real(rng, 0.0, kTwoPi)});
    p.opening_base = uniform_real(rng, 0.45, 0.51);
    for (std::size_t j = 0; j < 2; ++j) {
        const double mag = uniform_real(rng, 0.12, 0.32);
        // one widening and one narrowing bump keeps the mean opening near
        // the base across sites
        p.opening_bumps.push_back({j == 0 ? mag : -mag, uniform_real(rng, 10.0, 70.0),
                                   uniform_real(rng, 8.0, 18.0)});
    }
    p.inter_c = {uniform_real(rng, 0.4, 1.0), static_cast<double>(1 + bounded_uniform(rng, 2)),
                 uniform_real(rng, 0.0, kTwoPi)};
    const double vmag = uniform_real(rng, 1.0, 2.0);
    p.inter_l = {rng() & 1 ? vmag : -vmag, uniform_real(rng, 15.0, 65.0), uniform_real(rng, 10.0, 20.0)};
    return p;
}

ArcDataset generate_dataset(const GeneratorConfig& cfg) {
    if (cfg.n_arcs < 1) throw Error("n_arcs must be at least 1");
    if (cfg.n_sites < 1) throw Error("n_sites must be at least 1");
    if (cfg.max_step_cp < 0 || cfg.max_step_leaf < 0)
        throw Error("smoothness bounds must be non-negative");

    std::vector<SiteProfile> sites;
    for (std::size_t s = 0; s < cfg.n_sites; ++s) {
        auto rng = substream(cfg.seed, 0x5173000000000000ULL + s);
        sites.push_back(sample_site_profile(rng));
    }

    ArcDataset ds;
    ds.seed = cfg.seed;
    ds.arcs.reserve(cfg.n_arcs);
    for (std::size_t i = 0; i < cfg.n_arcs; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "arc-%06zu", i);
        ds.arcs.push_back(
            sample_arc(sites[i % cfg.n_sites], substream(cfg.seed, i), cfg, id));
    }
    return ds;
}

NormalizedArc flip_leaf_axis(const NormalizedArc& n) {
    NormalizedArc out = n;
    for (std::size_t c = 0; c < kControlPoints; ++c)
        for (std::size_t l = 0; l < kLeafPairs; ++l) {
            out.positions[c * kLeafPairs + l] = n.positions[c * kLeafPairs + (kLeafPairs - 1 - l)];
            out.gaps[c * kLeafPairs + l] = n.gaps[c * kLeafPairs + (kLeafPairs - 1 - l)];
        }
    return out;
}

NormalizedArc flip_cp_axis(const NormalizedArc& n) {
    NormalizedArc out = n;
    for (std::size_t c = 0; c < kControlPoints; ++c)
        for (std::size_t l = 0; l < kLeafPairs; ++l) {
            out.positions[c * kLeafPairs + l] =
                n.positions[(kControlPoints - 1 - c) * kLeafPairs + l];
            out.gaps[c * kLeafPairs + l] = n.gaps[(kControlPoints - 1 - c) * kLeafPairs + l];
        }
    return out;
}

NormalizedArc augment(const NormalizedArc& n, const AugmentationConfig& cfg,
                      std::mt19937_64& rng, const NormalizationSpec& spec) {
    NormalizedArc out = n;
    if (uniform_real(rng, 0.0, 1.0) < cfg.flip_horizontal) out = flip_leaf_axis(out);
    if (uniform_real(rng, 0.0, 1.0) < cfg.flip_vertical) out = flip_cp_axis(out);
    if (cfg.noise_sigma > 0.0) {
        const double sp = cfg.noise_sigma / spec.position_scale;
        const double sg = cfg.noise_sigma / spec.gap_scale;
        for (std::size_t i = 0; i < kPlaneSize; ++i) {
            out.positions[i] += sp * gauss(rng);
            out.gaps[i] = std::max(0.0, out.gaps[i] + sg * gauss(rng));
        }
    }
    return out;
}

std::pair<ArcDataset, ArcDataset> split(const ArcDataset& ds, double train_fraction,
                                        std::uint64_t seed) {
    if (ds.empty()) throw EmptyDataset();
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        throw Error("train_fraction must be in (0, 1]");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = substream(seed, 0x5b711700ULL);
    fisher_yates(order, rng);
    const std::size_t n_train = static_cast<std::size_t>(train_fraction * ds.size());
    ArcDataset train, val;
    train.seed = ds.seed;
    train.config_digest = ds.config_digest;
    val.seed = ds.seed;
    val.config_digest = ds.config_digest;
    for (std::size_t k = 0; k < ds.size(); ++k)
        (k < n_train ? train : val).arcs.push_back(ds.arcs[order[k]]);
    return {std::move(train), std::move(val)};
}

}  // namespace arclat
