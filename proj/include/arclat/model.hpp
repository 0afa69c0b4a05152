#pragma once

#include <random>
#include <string>
#include <vector>

#include "arclat/arc.hpp"
#include "arclat/layers.hpp"

namespace arclat {

struct ModelConfig {
    std::size_t k = 16;  // base filter count; channel ladder k, 2k, 4k, 8k
    std::size_t d = 32;  // latent dimension
    bool variational = false;
    double alpha = 0.01;  // KL weight, used only when variational
    double dropblock_rate = 0.2;
    std::size_t dropblock_size = 3;
};

void validate(const ModelConfig& cfg);

// Optimizer view of one parameter tensor.
struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

// Checkpoint view: parameters plus non-optimized state (batchnorm running
// statistics), in a fixed declared order.
struct NamedTensor {
    std::string name;
    Tensor* value;
};

struct LossParts {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

struct LossGrads {
    Tensor d_xhat;
    Tensor d_mu;
    Tensor d_log_var;
};

// z = mu + exp(log_var / 2) * eps, elementwise.
Tensor reparameterize(const Tensor& mu, const Tensor& log_var, const Tensor& eps);

// recon = mean over batch of 1/2 sum_cells (x - xhat)^2.
// kl = mean over batch of 1/2 sum_k (mu^2 + sigma^2 - log sigma^2 - 1).
// total = recon + alpha * kl. Pass empty (N, 0) latent stats for a plain
// autoencoder; the KL term is then zero.
LossParts vae_loss(const Tensor& x, const Tensor& x_hat, const Tensor& mu,
                   const Tensor& log_var, double alpha);
LossGrads vae_loss_backward(const Tensor& x, const Tensor& x_hat, const Tensor& mu,
                            const Tensor& log_var, double alpha);

struct DownBlock {
    Conv2d conv;
    MaxPool2d pool;
    DropBlock drop;
    BatchNorm2d bn;
    Relu relu;
};

struct UpBlock {
    ConvTranspose2d conv;
    DropBlock drop;
    BatchNorm2d bn;
    Relu relu;  // skipped on the final block; the output head gates channels
    bool last = false;
};

// Encoder: four downblocks (conv 3x3 s1 p1, maxpool 2x2, dropblock,
// batchnorm, ReLU), 80 -> 40 -> 20 -> 10 -> 5 with channels 2 -> k -> 2k ->
// 4k -> 8k. Latent head: flatten to 8k*25, linear to 2d (variational, split
// into means and log-variances) or to d (plain). Decoder: linear d -> 8k*25
// with ReLU, reshape, four upblocks (transposed conv s2, dropblock,
// batchnorm, ReLU except last) back to (2, 80, 80), then identity on the
// position channel and ReLU on the gap channel.
struct AutoencoderModel {
    ModelConfig cfg;
    DownBlock down[4];
    Linear to_stats;
    Linear to_image;
    Relu image_relu;
    UpBlock up[4];
    OutputHead head;

    explicit AutoencoderModel(const ModelConfig& c);

    // Xavier-uniform weights, zero biases, drawn from the stream in the
    // fixed layer order.
    void init_weights(std::mt19937_64& rng);

    // Train mode needs the stream (dropblock masks, eps draws); eval mode
    // must not touch it and may pass null.
    Tensor forward(const Tensor& x, Mode mode, std::mt19937_64* rng);
    Tensor encode(const Tensor& x, Mode mode, std::mt19937_64* rng);
    Tensor decode(const Tensor& z, Mode mode, std::mt19937_64* rng);

    // Reverse-mode pass over the caches of the last train-mode forward.
    // d_mu / d_log_var are the loss terms attached directly to the latent
    // heads; pass empty tensors for a plain autoencoder.
    Tensor backward(const Tensor& d_xhat, const Tensor& d_mu, const Tensor& d_log_var);

    void zero_grad();
    std::vector<ParamRef> parameters();
    std::vector<NamedTensor> named_tensors();

    // Latent statistics of the most recent forward/encode. For a plain
    // autoencoder mu holds the code and log_var/eps stay empty.
    Tensor last_mu, last_log_var, last_eps, last_z;
    // Output shape of every block in the most recent forward, input first.
    std::vector<std::vector<std::size_t>> trace;

   private:
    Tensor decode_from_latent(const Tensor& z, Mode mode, std::mt19937_64* rng);
};

// Batch assembly: channel 0 positions, channel 1 gaps, rows are control
// points. idx selects and orders the arcs.
Tensor arcs_to_tensor(const std::vector<NormalizedArc>& arcs, const std::vector<std::size_t>& idx);
NormalizedArc tensor_row_to_arc(const Tensor& t, std::size_t n, std::string id);

}  // namespace arclat
