#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "arclat/dataset.hpp"

namespace arclat {

struct Sinusoid {
    double amp = 0.0;     // mm (or unitless for interaction terms)
    double cycles = 1.0;  // full periods over the 80-step axis
    double phase = 0.0;   // radians
};

struct Bump {
    double amp = 0.0;     // mm (or unitless)
    double center = 40.0; // index units
    double width = 10.0;  // index units, Gaussian sigma
};

// Per-site delivery shape. Arcs of one site are jittered draws around these
// parameters; sites differ enough that same-site arcs cluster.
struct SiteProfile {
    std::vector<Sinusoid> center_trajectory;  // T(c), mm, moves both banks
    std::vector<Bump> leaf_envelope;          // E(l), mm, field shape across leaves
    double env_rms = 14.0;                    // target RMS of the centered envelope, mm
    double width_base = 28.0;                 // W(c) baseline, mm
    std::vector<Sinusoid> width_waves;        // W(c) modulation, mm
    double opening_base = 0.45;               // G(l) baseline, in [0,1]
    std::vector<Bump> opening_bumps;          // G(l) modulation
    Sinusoid inter_c;                         // U(c), unitless
    Bump inter_l;                             // V(l), mm
};

struct GeneratorConfig {
    std::size_t n_arcs = 1;
    std::size_t n_sites = 4;
    std::uint64_t seed = 0;
    // Smoothness bounds enforced on positions and on the bank-B
    // reconstruction. 0 is allowed and collapses the axis to a constant.
    double max_step_cp = 5.0;    // mm between adjacent control points
    double max_step_leaf = 10.0; // mm between adjacent leaves
};

struct AugmentationConfig {
    double noise_sigma = 0.5;       // mm, applied in normalized units
    double flip_horizontal = 0.5;   // probability of reversing the leaf axis
    double flip_vertical = 0.5;     // probability of reversing the control-point axis
};

SiteProfile sample_site_profile(std::mt19937_64& rng);

// Deterministic in (cfg.seed, arc index); arcs are independent of each other
// and of n_arcs, so prefixes of a larger dataset match a smaller one.
ArcDataset generate_dataset(const GeneratorConfig& cfg);

NormalizedArc flip_leaf_axis(const NormalizedArc& n);
NormalizedArc flip_cp_axis(const NormalizedArc& n);

NormalizedArc augment(const NormalizedArc& n, const AugmentationConfig& cfg,
                      std::mt19937_64& rng,
                      const NormalizationSpec& spec = {});

// Deterministic shuffle-and-cut; train gets floor(fraction * n) arcs.
std::pair<ArcDataset, ArcDataset> split(const ArcDataset& ds, double train_fraction,
                                        std::uint64_t seed);

}  // namespace arclat
