#pragma once

#include <utility>

#include "arclat/checkpoint.hpp"
#include "arclat/model.hpp"
#include "arclat/synthgen.hpp"

namespace arclat {

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t max_epochs = 60;  // hard cap 500
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    bool augment = true;
    AugmentationConfig augmentation;
};

struct TrainLog {
    std::vector<double> train_loss;   // per epoch, sample-weighted batch mean
    std::vector<double> val_loss;     // per epoch, eval mode
    std::vector<double> running_avg;  // mean of the last up-to-10 val losses
    std::size_t best_epoch = 0;       // 1-based epoch of the returned checkpoint
    bool aborted_non_finite = false;
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainLog log;
};

// Deterministic given cfg.seed: shuffles, augmentation draws, dropblock
// masks and eps draws all come from one substream in a fixed order. The
// model is left at its final-epoch state; the returned checkpoint is the
// snapshot with the lowest 10-epoch running-average validation loss. A
// non-finite loss aborts with the last good checkpoint, or throws
// NonFiniteLoss when none exists yet.
TrainResult train(AutoencoderModel& model, const std::vector<NormalizedArc>& train_set,
                  const std::vector<NormalizedArc>& val_set, const TrainConfig& cfg);

NormalizedArc reconstruct(AutoencoderModel& model, const NormalizedArc& arc);
NormalizedArc reconstruct(const Checkpoint& ckpt, const NormalizedArc& arc);

// Pooled cellwise median reconstruction error in mm over the dataset.
double median_abs_error(AutoencoderModel& model, const std::vector<NormalizedArc>& data,
                        const NormalizationSpec& spec = {});
double median_abs_error(const Checkpoint& ckpt, const std::vector<NormalizedArc>& data,
                        const NormalizationSpec& spec = {});

// Decodes z with coordinate dim_index offset by `steps` evenly spaced deltas
// spanning delta_range (inclusive). steps = 1 uses the range start.
std::vector<NormalizedArc> latent_traversal(const Checkpoint& ckpt, const std::vector<double>& z,
                                            std::size_t dim_index,
                                            std::pair<double, double> delta_range,
                                            std::size_t steps);

}  // namespace arclat
