#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cqa/errors.hpp"
#include "cqa/geometry.hpp"
#include "cqa/synthgen.hpp"
#include "oracles.hpp"

using namespace cqa;
using namespace cqa::synth;

namespace {

geom::MaskSlice square(int rows, int cols, int r0, int c0, int side) {
    geom::MaskSlice m(rows, cols);
    for (int r = r0; r < r0 + side; ++r)
        for (int c = c0; c < c0 + side; ++c) m.set(r, c, true);
    return m;
}

const std::vector<ShapeKind> kAll{ShapeKind::ellipse, ShapeKind::bean, ShapeKind::blob};

}  // namespace

TEST_CASE("identity perturbation returns the input") {
    for (auto kind : kAll) {
        auto m = make_shape(kind, GridSpec{}, 17);
        REQUIRE_FALSE(m.empty());
        CHECK(perturb_mask(m, PerturbationParams::identity(), 4) == m);
    }
}

TEST_CASE("pure translation shifts the square") {
    auto m = square(16, 16, 4, 4, 4);
    auto p = PerturbationParams::identity();
    p.translation_col_mm = Range::fixed(2.0);
    auto out = perturb_mask(m, p, 1);
    CHECK(out == square(16, 16, 4, 6, 4) );
    CHECK(geom::dice(m, out) == 0.5);
    auto want = oracle::metrics(m, out, 2.0);
    CHECK(geom::dice(m, out) == want.dsc);
}

TEST_CASE("translation honours anisotropic spacing") {
    geom::MaskSlice m(16, 16, geom::Spacing{2.0, 0.5});
    for (int r = 4; r < 8; ++r)
        for (int c = 4; c < 8; ++c) m.set(r, c, true);
    auto p = PerturbationParams::identity();
    p.translation_row_mm = Range::fixed(4.0);  // two rows
    auto out = perturb_mask(m, p, 1);
    for (int r = 6; r < 10; ++r)
        for (int c = 4; c < 8; ++c) CHECK(out.at(r, c));
    CHECK(out.area_px() == 16);
}

TEST_CASE("perturbation is deterministic per seed") {
    auto m = make_shape(ShapeKind::blob, GridSpec{}, 3);
    PerturbationParams p;
    CHECK(perturb_mask(m, p, 42) == perturb_mask(m, p, 42));
    CHECK_FALSE(perturb_mask(m, p, 42) == perturb_mask(m, p, 43));
}

TEST_CASE("perturbation errors") {
    CHECK_THROWS_AS(perturb_mask(geom::MaskSlice(8, 8), PerturbationParams{}, 1), DegenerateInputError);
    PerturbationParams bad;
    bad.elastic_grid = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.scale = {1.2, 0.9};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.elastic_mag_mm = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scaled shrinks towards identity") {
    PerturbationParams p;
    auto z = p.scaled(0.0);
    CHECK(z.rotation_deg.lo == 0.0);
    CHECK(z.rotation_deg.hi == 0.0);
    CHECK(z.scale.lo == 1.0);
    CHECK(z.scale.hi == 1.0);
    CHECK(z.elastic_mag_mm == 0.0);
    auto h = p.scaled(0.5);
    CHECK(h.rotation_deg.hi == doctest::Approx(6.0));
    CHECK(h.scale.lo == doctest::Approx(0.925));
}

TEST_CASE("shapes are nonempty and kind names round trip") {
    for (auto kind : kAll) {
        CHECK(shape_from_string(to_string(kind)) == kind);
        for (std::uint64_t s = 0; s < 20; ++s) CHECK(make_shape(kind, GridSpec{}, s).area_px() > 50);
    }
    CHECK_THROWS_AS(shape_from_string("torus"), ConfigError);
}

TEST_CASE("pseudo-CT intensities") {
    auto m = make_shape(ShapeKind::ellipse, GridSpec{}, 1);
    auto img = make_pseudo_ct(m, ImageModel{}, 9);
    double in = 0, out = 0;
    std::size_t nin = 0, nout = 0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            const double v = img.at(r, c);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            (m.at(r, c) ? in : out) += v;
            ++(m.at(r, c) ? nin : nout);
        }
    CHECK(in / nin - out / nout == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("single identity sample is perfect") {
    auto ds = generate_dataset(1, kAll, PerturbationParams::identity(), {}, 5);
    REQUIRE(ds.samples.size() == 1);
    CHECK(ds.samples[0].label == 2);
    CHECK(ds.samples[0].metrics.dsc == 1.0);
}

TEST_CASE("dataset determinism and label consistency") {
    auto a = generate_dataset(300, kAll, PerturbationParams{}, {}, 77);
    auto b = generate_dataset(300, kAll, PerturbationParams{}, {}, 77);
    CHECK(a.histogram == b.histogram);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].auto_mask == b.samples[i].auto_mask);
        CHECK(a.samples[i].image.values == b.samples[i].image.values);
        CHECK(a.samples[i].label == geom::surrogate_label(a.samples[i].metrics, {}));
        auto o = oracle::metrics(a.samples[i].ref_mask, a.samples[i].auto_mask, geom::kDefaultSurfaceToleranceMm);
        CHECK(o.dsc == a.samples[i].metrics.dsc);
        CHECK(o.sdsc == a.samples[i].metrics.sdsc);
        CHECK(o.hd95 == a.samples[i].metrics.hd95_mm);
    }
    // Sample i does not depend on n.
    auto c = generate_dataset(50, kAll, PerturbationParams{}, {}, 77);
    for (std::size_t i = 0; i < c.samples.size(); ++i) CHECK(c.samples[i].auto_mask == a.samples[i].auto_mask);
}

TEST_CASE("default parameters give every class more than 10 percent") {
    DatasetOptions opt;
    opt.ensure_balance = true;
    auto ds = generate_dataset(1000, kAll, PerturbationParams{}, {}, 2024, opt);
    CHECK(ds.balanced);
    for (auto h : ds.histogram) CHECK(10 * h > 1000);
}

TEST_CASE("large elastic displacement produces class 0") {
    auto p = PerturbationParams::identity();
    p.elastic_mag_mm = 20.0;
    DatasetOptions opt;
    opt.sample_severity = false;
    auto ds = generate_dataset(100, kAll, p, {}, 8, opt);
    CHECK(ds.histogram[0] > 0);
}

TEST_CASE("mean dsc decreases with elastic magnitude") {
    DatasetOptions opt;
    opt.sample_severity = false;
    double prev = 2.0;
    for (double mag : {0.0, 2.0, 6.0, 12.0}) {
        auto p = PerturbationParams::identity();
        p.elastic_mag_mm = mag;
        auto ds = generate_dataset(200, kAll, p, {}, 31, opt);
        double mean = 0.0;
        for (const auto& s : ds.samples) mean += s.metrics.dsc / 200.0;
        CAPTURE(mag);
        CHECK(mean < prev);
        prev = mean;
    }
}

TEST_CASE("dataset argument errors") {
    CHECK_THROWS_AS(generate_dataset(0, kAll, PerturbationParams{}, {}, 1), DomainError);
    CHECK_THROWS_AS(generate_dataset(5, {}, PerturbationParams{}, {}, 1), ConfigError);
}
