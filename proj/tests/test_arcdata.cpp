#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "arclat/arc.hpp"
#include "arclat/dataset.hpp"

using namespace arclat;

namespace {

std::vector<double> constant_plane(double v) { return std::vector<double>(kPlaneSize, v); }

Arc random_arc(std::mt19937_64& rng, const std::string& id) {
    std::uniform_real_distribution<double> pos_d(-60.0, 60.0);
    std::uniform_real_distribution<double> gap_d(0.0, 100.0);
    std::vector<double> positions(kPlaneSize), gaps(kPlaneSize);
    for (auto& p : positions) p = pos_d(rng);
    for (auto& g : gaps) g = gap_d(rng);
    return make_arc(std::move(positions), std::move(gaps), id);
}

}  // namespace

TEST_CASE("bank conversion") {
    auto bank_a = constant_plane(-10.0);
    auto bank_b = constant_plane(15.0);
    Arc arc = from_banks(bank_a, bank_b, "a0");
    CHECK(arc.pos(0, 0) == -10.0);
    CHECK(arc.gap(0, 0) == 25.0);
    CHECK(arc.gap(79, 79) == 25.0);

    auto [ra, rb] = to_banks(arc);
    CHECK(ra == bank_a);
    CHECK(rb == bank_b);

    Arc closed = from_banks(bank_a, bank_a, "a1");
    for (double g : closed.gaps) CHECK(g == 0.0);
}

TEST_CASE("bank conversion roundtrip on random arcs") {
    std::mt19937_64 rng(7);
    for (int k = 0; k < 5; ++k) {
        Arc arc = random_arc(rng, "r" + std::to_string(k));
        auto [a, b] = to_banks(arc);
        Arc back = from_banks(a, b, arc.id);
        CHECK(back.positions == arc.positions);
        for (std::size_t i = 0; i < kPlaneSize; ++i)
            CHECK(back.gaps[i] == doctest::Approx(arc.gaps[i]).epsilon(1e-9));
    }
}

TEST_CASE("crossed banks are rejected with coordinates") {
    auto bank_a = constant_plane(0.0);
    auto bank_b = constant_plane(1.0);
    bank_b[3 * kLeafPairs + 17] = -0.5;
    try {
        from_banks(bank_a, bank_b);
        FAIL("expected NegativeGap");
    } catch (const NegativeGap& e) {
        CHECK(e.control_point == 3);
        CHECK(e.leaf == 17);
    }
}

TEST_CASE("make_arc rejects negative gaps and bad shapes") {
    auto gaps = constant_plane(1.0);
    gaps[42] = -1e-9;
    CHECK_THROWS_AS(make_arc(constant_plane(0.0), gaps, ""), NegativeGap);
    CHECK_THROWS_AS(make_arc(std::vector<double>(100, 0.0), constant_plane(0.0), ""),
                    DimensionMismatch);
    auto nan_pos = constant_plane(0.0);
    nan_pos[0] = std::nan("");
    CHECK_THROWS_AS(make_arc(nan_pos, constant_plane(0.0), ""), NonFiniteValue);
}

TEST_CASE("normalization maps channel scales to 1") {
    Arc arc = make_arc(constant_plane(84.0), constant_plane(132.8), "n0");
    NormalizedArc n = normalize(arc);
    CHECK(n.positions[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n.gaps[0] == doctest::Approx(1.0).epsilon(1e-12));

    Arc zero = make_arc(constant_plane(0.0), constant_plane(0.0), "n1");
    NormalizedArc nz = normalize(zero);
    CHECK(nz.positions[0] == 0.0);
    CHECK(nz.gaps[0] == 0.0);
}

TEST_CASE("normalize and denormalize invert to 1e-9 relative") {
    std::mt19937_64 rng(11);
    Arc arc = random_arc(rng, "inv");
    Arc back = denormalize(normalize(arc));
    for (std::size_t i = 0; i < kPlaneSize; ++i) {
        CHECK(back.positions[i] == doctest::Approx(arc.positions[i]).epsilon(1e-9));
        CHECK(back.gaps[i] == doctest::Approx(arc.gaps[i]).epsilon(1e-9));
    }
}

TEST_CASE("denormalize_clamped floors the gap channel at zero") {
    NormalizedArc n;
    n.positions.assign(kPlaneSize, 0.1);
    n.gaps.assign(kPlaneSize, 0.05);
    n.gaps[7] = -0.5;
    CHECK_THROWS_AS(denormalize(n), NegativeGap);
    Arc a = denormalize_clamped(n);
    CHECK(a.gaps[7] == 0.0);
    CHECK(a.gaps[8] == doctest::Approx(0.05 * kGapScale));
}

TEST_CASE("flatten puts positions before gaps, control-point-major") {
    NormalizedArc n;
    n.positions.resize(kPlaneSize);
    n.gaps.resize(kPlaneSize);
    for (std::size_t i = 0; i < kPlaneSize; ++i) {
        n.positions[i] = static_cast<double>(i);
        n.gaps[i] = -static_cast<double>(i);
    }
    auto flat = flatten(n);
    REQUIRE(flat.size() == kArcSize);
    CHECK(flat[5 * kLeafPairs + 3] == 5.0 * kLeafPairs + 3);
    CHECK(flat[kPlaneSize + 5 * kLeafPairs + 3] == -(5.0 * kLeafPairs + 3));
    NormalizedArc back = unflatten(flat, "x");
    CHECK(back.positions == n.positions);
    CHECK(back.gaps == n.gaps);
    CHECK_THROWS_AS(unflatten(std::vector<double>(3)), DimensionMismatch);
}

TEST_CASE("aperture rasterization") {
    auto row = rasterize_aperture(2, 5, 2.0, 8);
    CHECK(row == std::vector<double>{0, 0, 2, 2, 2, 0, 0, 0});

    CHECK(rasterize_aperture(4, 4, 3.0, 8) == std::vector<double>(8, 0.0));
    CHECK(rasterize_aperture(1, 6, 0.0, 8) == std::vector<double>(8, 0.0));

    CHECK_THROWS_AS(rasterize_aperture(5, 2, 1.0, 8), LeafOrderViolation);
    CHECK_THROWS_AS(rasterize_aperture(3, 9, 1.0, 8), IndexOutOfRange);
    CHECK_THROWS_AS(rasterize_aperture(0, 4, -1.0, 8), Error);
}

TEST_CASE("raster row holds y on exactly r-l cells and 0 elsewhere") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> idx(0, 80);
    std::uniform_real_distribution<double> mu(0.0, 5.0);
    for (int k = 0; k < 200; ++k) {
        std::size_t a = idx(rng), b = idx(rng);
        std::size_t l = std::min(a, b), r = std::max(a, b);
        double y = mu(rng);
        auto row = rasterize_aperture(l, r, y, 80);
        std::size_t open = 0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i >= l && i < r) {
                CHECK(row[i] == y);
                ++open;
            } else {
                CHECK(row[i] == 0.0);
            }
        }
        CHECK(open == r - l);
    }
}

TEST_CASE("dataset JSONL roundtrip is exact") {
    std::mt19937_64 rng(23);
    ArcDataset ds;
    for (int k = 0; k < 3; ++k) ds.arcs.push_back(random_arc(rng, "arc-" + std::to_string(k)));

    const std::string path = "test_arcdata_roundtrip.jsonl";
    save_dataset(ds, path);
    ArcDataset back = load_dataset(path);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.arcs[i].id == ds.arcs[i].id);
        CHECK(back.arcs[i].positions == ds.arcs[i].positions);
        CHECK(back.arcs[i].gaps == ds.arcs[i].gaps);
    }
    std::remove(path.c_str());
}

TEST_CASE("dataset loader rejects malformed files") {
    const std::string path = "test_arcdata_bad.jsonl";

    auto write_file = [&](const std::string& content) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    };

    write_file("{not json\n");
    CHECK_THROWS_AS(load_dataset(path), MalformedRecord);

    write_file("{\"id\":\"a\"}\n");
    CHECK_THROWS_AS(load_dataset(path), MalformedRecord);

    // 79 leaves in the first row
    {
        std::mt19937_64 rng(5);
        ArcDataset ds;
        ds.arcs.push_back(random_arc(rng, "short"));
        save_dataset(ds, path);
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        in.close();
        auto pos = line.find(",", line.find("\"positions\""));
        line.erase(pos, line.find(",", pos + 1) - pos);  // drop one number
        write_file(line + "\n");
        CHECK_THROWS_AS(load_dataset(path), DimensionMismatch);
    }

    // negative gap in the file
    {
        ArcDataset ds;
        ds.arcs.push_back(make_arc(std::vector<double>(kPlaneSize, 1.5),
                                   std::vector<double>(kPlaneSize, 2.0), "neg"));
        save_dataset(ds, path);
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        in.close();
        auto key = line.find("\"gaps\"");
        auto z = line.find("2.0", key);
        line.replace(z, 3, "-1.0");
        write_file(line + "\n");
        CHECK_THROWS_AS(load_dataset(path), NegativeGap);
    }

    // duplicate ids
    {
        std::mt19937_64 rng(5);
        ArcDataset ds;
        ds.arcs.push_back(random_arc(rng, "dup"));
        ds.arcs.push_back(random_arc(rng, "dup"));
        save_dataset(ds, path);
        CHECK_THROWS_AS(load_dataset(path), MalformedRecord);
    }

    std::remove(path.c_str());
}

TEST_CASE("malformed record carries its line number") {
    const std::string path = "test_arcdata_line.jsonl";
    {
        std::mt19937_64 rng(9);
        ArcDataset ds;
        ds.arcs.push_back(random_arc(rng, "ok"));
        save_dataset(ds, path);
        std::ofstream app(path, std::ios::app | std::ios::binary);
        app << "garbage\n";
    }
    try {
        load_dataset(path);
        FAIL("expected MalformedRecord");
    } catch (const MalformedRecord& e) {
        CHECK(e.line == 2);
    }
    std::remove(path.c_str());
}
