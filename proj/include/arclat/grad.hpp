#pragma once

#include <functional>
#include <vector>

#include "arclat/checkpoint.hpp"
#include "arclat/dose.hpp"

namespace arclat {

// Dense Jacobian d(output)/d(input), row-major. Decoder Jacobians have the
// 12,800 flattened arc cells as rows (normalized units unless the rows have
// been rescaled) and the latent coordinates as columns.
struct JacobianMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    JacobianMatrix() = default;
    JacobianMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

JacobianMatrix matmul(const JacobianMatrix& a, const JacobianMatrix& b);
std::vector<double> multiply(const JacobianMatrix& J, const std::vector<double>& v);
std::vector<double> multiply_transposed(const JacobianMatrix& J, const std::vector<double>& v);

// A linear subspace decodes as mean + components^T z, so the Jacobian is the
// stacked component rows, independent of z.
JacobianMatrix pca_jacobian(const PcaModel& model);

// Evaluation-mode Jacobians of the individual decoder layers. The random
// layers have no well-defined train-mode Jacobian and throw UnsupportedLayer
// when queried with Mode::Train; batchnorm folds its running statistics into
// a per-channel affine scale.
JacobianMatrix layer_jacobian(const Linear& layer);
JacobianMatrix layer_jacobian(const Relu&, const Tensor& pre);  // 0/1 gate, 1 at exactly 0
JacobianMatrix layer_jacobian(const ConvTranspose2d& layer, std::size_t in_h, std::size_t in_w);
JacobianMatrix layer_jacobian(const BatchNorm2d& layer, std::size_t h, std::size_t w, Mode mode);
JacobianMatrix layer_jacobian(const DropBlock& layer, std::size_t n, Mode mode);
JacobianMatrix layer_jacobian(const OutputHead&, const Tensor& pre);  // identity / gap gate

// Ordered product of the decoder's layer Jacobians at z, built by pushing
// the latent basis vectors through the frozen (evaluation-mode) decoder:
// batchnorm as its affine scale, dropblock as identity, ReLU and output-head
// gates recorded from a value pass at z. Accepts network and pca
// checkpoints; rows are in normalized units. Dense output is limited to
// d <= 128.
JacobianMatrix decoder_jacobian(const Checkpoint& ckpt, const std::vector<double>& z);

// Rescale rows to millimetre units: position rows by the position scale,
// gap rows by the gap scale.
void denormalize_rows(JacobianMatrix& J, const NormalizationSpec& spec = {});

// df/dz_j = sum_{i,k} dose_grad_k * D_ik * J_ij as two matrix-vector
// products (beamlet_gradient then J^T). J must be in denormalized beamlet
// units and its row count must match the influence beamlet count.
std::vector<double> latent_gradient(const std::vector<double>& dose_grad,
                                    const DoseInfluence& D, const JacobianMatrix& J);

// Objective over the decoded, denormalized flat arc vector (mm). When the
// gradient pointer is non-null the callee fills it with df/dx of the same
// length.
using ArcObjective = std::function<double(const std::vector<double>&, std::vector<double>*)>;

struct DescentOptions {
    std::size_t max_steps = 200;
    double initial_step = 1.0;
    std::size_t max_halvings = 30;
};

struct DescentResult {
    std::vector<double> z;
    std::vector<double> trace;  // objective at z0 and after each accepted step
    bool line_search_failed = false;
};

// Gradient descent in the latent space with a backtracking line search:
// halve the step until the objective decreases, up to max_halvings; if no
// decrease is found the search stops and the best iterate is returned with
// the failure flag set. The trace is strictly decreasing past its first
// entry.
DescentResult gradient_descend_latent(const Checkpoint& model, const ArcObjective& objective,
                                      const std::vector<double>& z0,
                                      const DescentOptions& opt = {});

}  // namespace arclat
