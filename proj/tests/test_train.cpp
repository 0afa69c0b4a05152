#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "arclat/checkpoint.hpp"
#include "arclat/rng.hpp"
#include "arclat/synthgen.hpp"
#include "arclat/train.hpp"

using namespace arclat;

namespace {

std::vector<NormalizedArc> normalized_slice(const ArcDataset& ds, std::size_t lo,
                                            std::size_t hi) {
    std::vector<NormalizedArc> out;
    out.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) out.push_back(normalize(ds.arcs[i]));
    return out;
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

double l2_dist(const NormalizedArc& a, const NormalizedArc& b) {
    const auto fa = flatten(a);
    const auto fb = flatten(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) acc += sq(fa[i] - fb[i]);
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("same seed trains to byte-identical checkpoints") {
    GeneratorConfig g;
    g.n_arcs = 12;
    g.n_sites = 2;
    g.seed = 501;
    const ArcDataset ds = generate_dataset(g);
    const auto tr = normalized_slice(ds, 0, 8);
    const auto va = normalized_slice(ds, 8, 12);

    auto run = [&](std::uint64_t seed, const std::string& path) {
        ModelConfig mc;
        mc.k = 4;
        mc.d = 8;
        mc.variational = true;
        mc.alpha = 0.01;
        AutoencoderModel m(mc);
        auto irng = substream(2024, 0);
        m.init_weights(irng);
        TrainConfig tc;
        tc.max_epochs = 3;
        tc.batch_size = 3;
        tc.seed = seed;
        tc.augment = true;
        TrainResult r = train(m, tr, va, tc);
        save_checkpoint(r.checkpoint, path);
    };

    const auto pa = temp_path("train_det_a.arcm");
    const auto pb = temp_path("train_det_b.arcm");
    const auto pc = temp_path("train_det_c.arcm");
    run(11, pa);
    run(11, pb);
    run(12, pc);
    CHECK(read_bytes(pa) == read_bytes(pb));
    CHECK(read_bytes(pa) != read_bytes(pc));
}

TEST_CASE("training bookkeeping tracks the best running average") {
    GeneratorConfig g;
    g.n_arcs = 10;
    g.n_sites = 2;
    g.seed = 502;
    const ArcDataset ds = generate_dataset(g);
    const auto tr = normalized_slice(ds, 0, 7);
    const auto va = normalized_slice(ds, 7, 10);

    ModelConfig mc;
    mc.k = 2;
    mc.d = 4;
    AutoencoderModel m(mc);
    auto irng = substream(9, 0);
    m.init_weights(irng);
    TrainConfig tc;
    tc.max_epochs = 14;
    tc.batch_size = 4;
    tc.seed = 9;
    TrainResult r = train(m, tr, va, tc);

    REQUIRE(r.log.train_loss.size() == 14);
    REQUIRE(r.log.val_loss.size() == 14);
    REQUIRE(r.log.running_avg.size() == 14);
    CHECK_FALSE(r.log.aborted_non_finite);

    // recompute the windowed averages and the first strict minimum
    for (std::size_t e = 0; e < 14; ++e) {
        const std::size_t window = std::min<std::size_t>(10, e + 1);
        double avg = 0.0;
        for (std::size_t i = e + 1 - window; i <= e; ++i) avg += r.log.val_loss[i];
        avg /= static_cast<double>(window);
        CHECK(r.log.running_avg[e] == doctest::Approx(avg).epsilon(1e-12));
    }
    const auto best_it = std::min_element(r.log.running_avg.begin(), r.log.running_avg.end());
    const std::size_t best =
        static_cast<std::size_t>(best_it - r.log.running_avg.begin()) + 1;
    CHECK(r.log.best_epoch == best);
    CHECK(r.checkpoint.epoch == best);
    CHECK(r.checkpoint.val_loss == *best_it);
    CHECK(r.checkpoint.kind == "ae");
}

TEST_CASE("single sample overfit collapses the reconstruction loss") {
    GeneratorConfig g;
    g.n_arcs = 1;
    g.n_sites = 1;
    g.seed = 42;
    const ArcDataset ds = generate_dataset(g);
    const std::vector<NormalizedArc> one = {normalize(ds.arcs[0])};

    ModelConfig mc;
    mc.k = 16;
    mc.d = 32;
    mc.dropblock_rate = 0.0;
    AutoencoderModel m(mc);
    auto irng = substream(7, 0);
    m.init_weights(irng);
    TrainConfig tc;
    tc.learning_rate = 0.01;
    tc.max_epochs = 200;
    tc.batch_size = 1;
    tc.seed = 7;
    tc.augment = false;
    TrainResult r = train(m, one, one, tc);

    REQUIRE(r.log.train_loss.size() == 200);
    CHECK(r.log.train_loss.back() <= 0.1 * r.log.train_loss.front());
}

TEST_CASE("zeroed output stage predicts the all-zero arc") {
    GeneratorConfig g;
    g.n_arcs = 10;
    g.n_sites = 3;
    g.seed = 99;
    const ArcDataset ds = generate_dataset(g);
    const auto data = normalized_slice(ds, 0, 10);

    ModelConfig mc;
    mc.k = 2;
    mc.d = 4;
    AutoencoderModel m(mc);
    auto irng = substream(3, 0);
    m.init_weights(irng);
    // The final deconv feeds a fresh batchnorm (mean 0, var 1, gamma 1,
    // beta 0), so zeroing it pins every eval prediction at exactly zero.
    for (auto& p : m.parameters())
        if (p.name == "up4.conv.weight" || p.name == "up4.conv.bias")
            std::fill(p.value->data.begin(), p.value->data.end(), 0.0);

    const double got = median_abs_error(m, data);

    // a zero prediction leaves |truth| itself as the cell error
    std::vector<double> cells;
    cells.reserve(ds.size() * kArcSize);
    for (const auto& a : ds.arcs) {
        for (double v : a.positions) cells.push_back(std::fabs(v));
        for (double v : a.gaps) cells.push_back(std::fabs(v));
    }
    std::sort(cells.begin(), cells.end());
    const double expected = median_of_sorted(cells);
    REQUIRE(expected > 0.0);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("latent traversal decodes deltas along one dimension") {
    ModelConfig mc;
    mc.k = 2;
    mc.d = 16;
    mc.variational = true;
    mc.alpha = 0.01;
    AutoencoderModel m(mc);
    auto irng = substream(5, 0);
    m.init_weights(irng);
    const Checkpoint ckpt = snapshot_model(m, 1, 0.5);
    const std::vector<double> z(16, 0.0);

    // zero range: every step decodes the same point
    const auto same = latent_traversal(ckpt, z, 3, {0.0, 0.0}, 5);
    REQUIRE(same.size() == 5);
    for (std::size_t s = 1; s < 5; ++s) {
        CHECK(same[s].positions == same[0].positions);
        CHECK(same[s].gaps == same[0].gaps);
    }
    CHECK(same[0].id == "traversal-0");
    CHECK(same[4].id == "traversal-4");

    // fine steps across the range stay closer together than the endpoints
    const auto sweep = latent_traversal(ckpt, z, 10, {-1.0, 1.0}, 11);
    REQUIRE(sweep.size() == 11);
    const double endpoint = l2_dist(sweep.front(), sweep.back());
    CHECK(endpoint > 0.0);
    for (std::size_t s = 1; s < 11; ++s) CHECK(l2_dist(sweep[s - 1], sweep[s]) < endpoint);

    // a single step lands on the range start regardless of the range end
    const auto single = latent_traversal(ckpt, z, 10, {0.37, 99.0}, 1);
    const auto pinned = latent_traversal(ckpt, z, 10, {0.37, 0.37}, 1);
    CHECK(single[0].positions == pinned[0].positions);
    CHECK(single[0].gaps == pinned[0].gaps);

    CHECK_THROWS_AS(latent_traversal(ckpt, std::vector<double>(15, 0.0), 0, {0.0, 1.0}, 2),
                    DimensionMismatch);
    CHECK_THROWS_AS(latent_traversal(ckpt, z, 16, {0.0, 1.0}, 2), IndexOutOfRange);
}

TEST_CASE("non-finite validation loss without a snapshot propagates") {
    GeneratorConfig g;
    g.n_arcs = 6;
    g.n_sites = 2;
    g.seed = 303;
    const ArcDataset ds = generate_dataset(g);
    const auto tr = normalized_slice(ds, 0, 4);
    auto va = normalized_slice(ds, 4, 6);
    va[0].positions[123] = std::numeric_limits<double>::quiet_NaN();

    ModelConfig mc;
    mc.k = 2;
    mc.d = 4;
    AutoencoderModel m(mc);
    auto irng = substream(1, 0);
    m.init_weights(irng);
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 4;
    tc.seed = 1;
    tc.augment = false;
    CHECK_THROWS_AS(train(m, tr, va, tc), NonFiniteLoss);
}

TEST_CASE("non-finite loss after a snapshot aborts with the best checkpoint") {
    GeneratorConfig g;
    g.n_arcs = 8;
    g.n_sites = 2;
    g.seed = 77;
    const ArcDataset ds = generate_dataset(g);
    const auto tr = normalized_slice(ds, 0, 6);
    const auto va = normalized_slice(ds, 6, 8);

    // An aggressive learning rate sits on the edge between diverging during
    // epoch 1 (which must rethrow) and blowing up only after a snapshot
    // exists. Which seed lands on which side shifts with codegen, so scan
    // until one aborts instead of pinning a single trajectory.
    bool found = false;
    for (std::uint64_t seed = 1; seed <= 40 && !found; ++seed) {
        ModelConfig mc;
        mc.k = 2;
        mc.d = 4;
        mc.variational = true;
        mc.alpha = 0.01;
        AutoencoderModel m(mc);
        auto irng = substream(seed, 0);
        m.init_weights(irng);
        TrainConfig tc;
        tc.learning_rate = 0.30;
        tc.max_epochs = 30;
        tc.batch_size = 6;
        tc.seed = seed;
        tc.augment = false;
        try {
            TrainResult r = train(m, tr, va, tc);
            if (!r.log.aborted_non_finite) continue;
            found = true;
            REQUIRE(r.log.best_epoch >= 1);
            CHECK(r.checkpoint.epoch == r.log.best_epoch);
            CHECK(r.log.val_loss.size() >= r.log.best_epoch);
            REQUIRE_FALSE(r.checkpoint.arrays.empty());
            const NormalizedArc rec = reconstruct(r.checkpoint, tr[0]);
            for (double v : rec.positions) REQUIRE(std::isfinite(v));
            for (double v : rec.gaps) REQUIRE(std::isfinite(v));
        } catch (const NonFiniteLoss&) {
            // diverged before the first snapshot; try the next seed
        }
    }
    CHECK(found);
}

TEST_CASE("training rejects empty datasets and bad configs") {
    GeneratorConfig g;
    g.n_arcs = 2;
    g.seed = 1;
    const ArcDataset ds = generate_dataset(g);
    const auto some = normalized_slice(ds, 0, 2);
    ModelConfig mc;
    mc.k = 2;
    mc.d = 4;
    AutoencoderModel m(mc);
    TrainConfig tc;
    CHECK_THROWS_AS(train(m, {}, some, tc), EmptyDataset);
    CHECK_THROWS_AS(train(m, some, {}, tc), EmptyDataset);
    TrainConfig bad = tc;
    bad.max_epochs = 501;
    CHECK_THROWS_AS(train(m, some, some, bad), Error);
    bad = tc;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(m, some, some, bad), Error);
}
