#pragma once

#include <string>
#include <vector>

#include "arclat/model.hpp"
#include "arclat/pca.hpp"

namespace arclat {

// One named array inside a checkpoint, stored as 32-bit floats on disk and
// widened back to doubles in memory.
struct CheckpointArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

// Container for any persisted model. kind is "ae", "vae" or "pca"; config
// carries the kind-specific hyperparameters. Files are byte-deterministic:
// same state in, same bytes out, no timestamps.
struct Checkpoint {
    std::string kind;
    ModelConfig model_config;      // ae / vae
    std::size_t pca_dim = 0;       // pca
    std::vector<CheckpointArray> arrays;
    std::size_t epoch = 0;         // ae / vae training metadata
    double val_loss = 0.0;
};

// Binary layout: "ARCM", version byte, little-endian u32 JSON length, JSON
// metadata (kind, config, array names/shapes, training metadata), then the
// concatenated little-endian float32 payload in array order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot captures the current weights and batchnorm running statistics.
Checkpoint snapshot_model(AutoencoderModel& model, std::size_t epoch, double val_loss);
// Rebuilds the architecture from the stored config; array names, shapes and
// total weight count must match it exactly.
AutoencoderModel model_from_checkpoint(const Checkpoint& ckpt);

Checkpoint snapshot_pca(const PcaModel& model);
// Restores and re-orthonormalizes (float32 storage costs ~1e-8 of basis
// orthonormality).
PcaModel pca_from_checkpoint(const Checkpoint& ckpt);

}  // namespace arclat
