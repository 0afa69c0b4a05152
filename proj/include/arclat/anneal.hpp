#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "arclat/arc.hpp"
#include "arclat/checkpoint.hpp"

namespace arclat {

// Running-max envelope of one leaf row: a forward sweep over indices
// 1..n/2 and a backward sweep over n-1..n/2, both chained from the anchor
// cell 0; the backward sweep writes last where they overlap.
std::vector<double> geometry_init_row(const std::vector<double>& target);

// Row-wise envelope of a whole arc, applied independently per channel and
// control point. Serves as the search start for direct-aperture trials.
Arc geometry_init(const Arc& target);

// Mutable-leaf mask: leaves whose position or gap varies across control
// points with a standard deviation above 2 mm, dilated by two leaves on
// each side, union over channels. 1 = inside the region of interest.
std::vector<std::uint8_t> select_roi(const Arc& init);

// Flat millimetre layout used by every annealing objective: positions in
// [0, kPlaneSize), gaps in [kPlaneSize, kArcSize), control-point-major.
std::vector<double> flat_mm(const Arc& arc);

struct PositionEval {
    double value = 0.0;          // mean squared displacement, mm^2
    std::vector<double> eps;     // per-cell absolute displacement, mm
};

// E = (1/kArcSize) * sum (s_i - s*_i)^2 over flat millimetre vectors.
PositionEval position_objective(const std::vector<double>& s,
                                const std::vector<double>& s_star);

// Direct-aperture search space: integer-millimetre mutations of a sampled
// tenth of the region-of-interest cells, gap channel clamped at zero.
struct FullDaoSpace {
    Arc init;
    std::vector<std::uint8_t> roi;  // kLeafPairs flags
    double mutation_fraction = 0.10;
    int max_step_mm = 3;            // offsets drawn from nonzero integers in +-3
};

// Envelope start state plus its variability mask from one target arc.
FullDaoSpace make_full_dao_space(const Arc& target);

// Latent search space over a persisted compressor (pca / ae / vae).
// Proposals perturb max(1, d/8) coordinates with Gaussian steps of
// sigma = step_sigma * min(1, T/T0). Decoded states pass through the
// clamped denormalization, so gap feasibility holds for every compressor.
struct LatentSpace {
    Checkpoint compressor;
    std::vector<double> init_z;
    double step_sigma = 0.1;
};

// Start near the latent origin: z0 = 0.1 * standard normal draws.
LatentSpace make_latent_space(const Checkpoint& compressor, std::mt19937_64& rng);

using SearchSpace = std::variant<FullDaoSpace, LatentSpace>;

// Metropolis rule: downhill always accepted; uphill with probability
// exp(-delta_E / T). T <= 0 degenerates to strict greedy descent.
bool accept(double delta_E, double temperature, std::mt19937_64& rng);

struct StoppingRule {
    enum class Kind { RelativeImprovement, MaxIterations, TimeBudget };
    Kind kind = Kind::RelativeImprovement;
    // RelativeImprovement: stop when the best objective improved by less
    // than `threshold` (relative) over the trailing window — an iteration
    // count on the virtual clock, a wall-clock span on the real clock.
    double threshold = 0.01;
    std::size_t window_iterations = 500;
    double window_seconds = 15.0;
    std::size_t max_iterations = 0;
    double budget_seconds = 0.0;

    static StoppingRule relative_improvement(double threshold = 0.01,
                                             std::size_t window_iterations = 500,
                                             double window_seconds = 15.0);
    static StoppingRule max_iterations_rule(std::size_t n);
    static StoppingRule time_budget(double seconds);
};

void validate(const StoppingRule& rule);

enum class ClockMode { Virtual, Real };

// Virtual mode advances a deterministic clock by t_opt_s + t_dose_s per
// iteration; real mode measures elapsed wall time and sleeps t_dose_s to
// simulate the dose engine.
struct TimingModel {
    double t_opt_s = 0.0;
    double t_dose_s = 0.0;
    ClockMode clock = ClockMode::Virtual;
};

void validate(const TimingModel& timing);

struct AnnealConfig {
    std::uint64_t seed = 0;
    double beta = 0.999;             // geometric cooling per iteration
    std::size_t t0_samples = 100;    // uphill proposals used to calibrate T0
    double t0_acceptance = 0.8;      // target mean acceptance of those samples
    // When set, the temperature is pinned to this value: no calibration, no
    // cooling. Zero gives strict greedy descent.
    std::optional<double> fixed_temperature;
    std::size_t hard_iteration_cap = 1000000;  // safety bound on runaway rules
};

void validate(const AnnealConfig& cfg);

// Objective over the decoded arc (mm) and the per-control-point beam
// weights; the weight vector is empty unless a WeightSearch is active.
using StateObjective = std::function<double(const Arc&, const std::vector<double>&)>;

// Anneals beam weights alongside the search state: each proposal also
// shifts one weight by a tempered Gaussian step, clamped at zero. An empty
// init disables weight search.
struct WeightSearch {
    std::vector<double> init;
    double step_sigma = 0.05;
};

struct TraceRow {
    std::size_t iteration = 0;
    double virtual_time_s = 0.0;
    double objective = 0.0;  // objective of the current state after the accept decision
    bool accepted = false;
    double temperature = 0.0;
};

struct TrialMetrics {
    double initial_objective = 0.0;
    double best_objective = 0.0;
    std::size_t iterations = 0;  // N
    double tau_s = 0.0;
    double t0 = 0.0;
    Arc best_arc;
    std::vector<double> best_z;        // latent trials only
    std::vector<double> best_weights;  // weight search only
    std::vector<double> best_trace;    // best-so-far, initial value first
    std::vector<TraceRow> trace;
    std::vector<double> eps;  // |best - target| per cell when a target is given
    double eps_median = 0.0;
};

// One annealing run: calibrate T0 on uphill proposals from the start state,
// then propose / evaluate / Metropolis-accept with geometric cooling until
// the stopping rule fires. Deterministic given cfg.seed on the virtual
// clock. A non-finite objective aborts the trial.
TrialMetrics run_trial(const SearchSpace& space, const StateObjective& objective,
                       const StoppingRule& stopping, const TimingModel& timing,
                       const AnnealConfig& cfg, const WeightSearch& weights = {},
                       const Arc* target = nullptr);

struct AnnealSummary {
    double eps_median = 0.0, eps_se = 0.0;
    double iterations_median = 0.0, iterations_se = 0.0;
    double tau_median = 0.0, tau_se = 0.0;
};

// Medians over trials with bootstrap standard errors of the median (1,000
// seeded resamples). Needs at least two trials.
AnnealSummary aggregate(const std::vector<TrialMetrics>& trials, std::uint64_t seed);

// CSV emitters; a nonempty comment becomes a leading '#' header line.
std::string trace_csv(const TrialMetrics& m, const std::string& comment = "");

struct SummaryRow {
    std::string space;
    std::size_t d = 0;
    AnnealSummary summary;
};

std::string summary_csv(const std::vector<SummaryRow>& rows, const std::string& comment = "");

}  // namespace arclat
