#include "arclat/train.hpp"

#include <cmath>
#include <numeric>

#include "arclat/adam.hpp"
#include "arclat/rng.hpp"

namespace arclat {

namespace {

// Loss of one eval-mode pass over a whole set, batched. VAE scores with
// z = mu; the KL term still uses the predicted statistics.
double eval_loss(AutoencoderModel& model, const std::vector<NormalizedArc>& set,
                 std::size_t batch_size) {
    const bool vae = model.cfg.variational;
    double acc = 0.0;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        const std::size_t stop = std::min(set.size(), start + batch_size);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = arcs_to_tensor(set, idx);
        Tensor y = model.forward(x, Mode::Eval, nullptr);
        const Tensor empty({idx.size(), 0});
        LossParts parts = vae ? vae_loss(x, y, model.last_mu, model.last_log_var, model.cfg.alpha)
                              : vae_loss(x, y, empty, empty, 0.0);
        acc += parts.total * static_cast<double>(idx.size());
    }
    return acc / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(AutoencoderModel& model, const std::vector<NormalizedArc>& train_set,
                  const std::vector<NormalizedArc>& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw EmptyDataset("training set is empty");
    if (val_set.empty()) throw EmptyDataset("validation set is empty");
    ARCLAT_CHECK(cfg.learning_rate > 0.0, "learning rate must be positive");
    ARCLAT_CHECK(cfg.max_epochs >= 1 && cfg.max_epochs <= 500,
                 "epoch count must lie in [1, 500]");
    ARCLAT_CHECK(cfg.batch_size >= 1, "batch size must be positive");

    auto rng = substream(cfg.seed, 1);
    Adam adam;
    adam.lr = cfg.learning_rate;
    const bool vae = model.cfg.variational;

    TrainResult out;
    TrainLog& log = out.log;
    bool have_best = false;
    double best_avg = 0.0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        fisher_yates(order, rng);
        double epoch_loss = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
                const std::size_t nb = stop - start;

                Tensor x;
                if (cfg.augment) {
                    std::vector<NormalizedArc> batch;
                    batch.reserve(nb);
                    for (std::size_t i = start; i < stop; ++i)
                        batch.push_back(augment(train_set[order[i]], cfg.augmentation, rng));
                    std::vector<std::size_t> all(nb);
                    std::iota(all.begin(), all.end(), std::size_t{0});
                    x = arcs_to_tensor(batch, all);
                } else {
                    x = arcs_to_tensor(train_set,
                                       {order.begin() + static_cast<std::ptrdiff_t>(start),
                                        order.begin() + static_cast<std::ptrdiff_t>(stop)});
                }

                Tensor y = model.forward(x, Mode::Train, &rng);
                const Tensor empty({nb, 0});
                const Tensor& mu = vae ? model.last_mu : empty;
                const Tensor& lv = vae ? model.last_log_var : empty;
                LossParts parts = vae_loss(x, y, mu, lv, vae ? model.cfg.alpha : 0.0);
                epoch_loss += parts.total * static_cast<double>(nb);

                LossGrads grads = vae_loss_backward(x, y, mu, lv, vae ? model.cfg.alpha : 0.0);
                model.zero_grad();
                model.backward(grads.d_xhat, grads.d_mu, grads.d_log_var);
                adam.step(model.parameters());
            }

            log.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
            log.val_loss.push_back(eval_loss(model, val_set, cfg.batch_size));
        } catch (const NonFiniteLoss&) {
            if (!have_best) throw;
            log.aborted_non_finite = true;
            return out;
        }

        const std::size_t window = std::min<std::size_t>(10, log.val_loss.size());
        double avg = 0.0;
        for (std::size_t i = log.val_loss.size() - window; i < log.val_loss.size(); ++i)
            avg += log.val_loss[i];
        avg /= static_cast<double>(window);
        log.running_avg.push_back(avg);

        if (!have_best || avg < best_avg) {
            have_best = true;
            best_avg = avg;
            log.best_epoch = epoch;
            out.checkpoint = snapshot_model(model, epoch, avg);
        }
    }
    return out;
}

NormalizedArc reconstruct(AutoencoderModel& model, const NormalizedArc& arc) {
    Tensor x = arcs_to_tensor({arc}, {0});
    Tensor y = model.forward(x, Mode::Eval, nullptr);
    return tensor_row_to_arc(y, 0, arc.id);
}

NormalizedArc reconstruct(const Checkpoint& ckpt, const NormalizedArc& arc) {
    AutoencoderModel model = model_from_checkpoint(ckpt);
    return reconstruct(model, arc);
}

double median_abs_error(AutoencoderModel& model, const std::vector<NormalizedArc>& data,
                        const NormalizationSpec& spec) {
    if (data.empty()) throw EmptyDataset("evaluation set is empty");
    std::vector<std::vector<double>> truth, recon;
    truth.reserve(data.size());
    recon.reserve(data.size());
    const std::size_t batch = 64;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t stop = std::min(data.size(), start + batch);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = arcs_to_tensor(data, idx);
        Tensor y = model.forward(x, Mode::Eval, nullptr);
        for (std::size_t n = 0; n < idx.size(); ++n) {
            truth.push_back(flatten(data[idx[n]]));
            recon.push_back(flatten(tensor_row_to_arc(y, n, "")));
        }
    }
    return median_abs_error_mm(truth, recon, spec);
}

double median_abs_error(const Checkpoint& ckpt, const std::vector<NormalizedArc>& data,
                        const NormalizationSpec& spec) {
    AutoencoderModel model = model_from_checkpoint(ckpt);
    return median_abs_error(model, data, spec);
}

std::vector<NormalizedArc> latent_traversal(const Checkpoint& ckpt, const std::vector<double>& z,
                                            std::size_t dim_index,
                                            std::pair<double, double> delta_range,
                                            std::size_t steps) {
    AutoencoderModel model = model_from_checkpoint(ckpt);
    const std::size_t d = model.cfg.d;
    if (z.size() != d)
        throw DimensionMismatch("traversal point has " + std::to_string(z.size()) +
                                " coordinates, model expects " + std::to_string(d));
    if (dim_index >= d)
        throw IndexOutOfRange("traversal dimension " + std::to_string(dim_index) +
                              " out of range for d=" + std::to_string(d));
    ARCLAT_CHECK(steps >= 1, "traversal needs at least one step");

    Tensor zb({steps, d});
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = steps > 1 ? static_cast<double>(s) / static_cast<double>(steps - 1) : 0.0;
        const double delta = delta_range.first + t * (delta_range.second - delta_range.first);
        for (std::size_t j = 0; j < d; ++j) zb.at2(s, j) = z[j];
        zb.at2(s, dim_index) += delta;
    }
    Tensor y = model.decode(zb, Mode::Eval, nullptr);
    std::vector<NormalizedArc> out;
    out.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s)
        out.push_back(tensor_row_to_arc(y, s, "traversal-" + std::to_string(s)));
    return out;
}

}  // namespace arclat
