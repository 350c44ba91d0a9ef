#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "cqa/errors.hpp"
#include "cqa/geometry.hpp"
#include "oracles.hpp"

using namespace cqa::geom;

namespace {

MaskSlice rect(int rows, int cols, int r0, int c0, int h, int w, Spacing s = {}) {
    MaskSlice m(rows, cols, s);
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) m.set(r, c, true);
    return m;
}

MaskSlice shifted(const MaskSlice& m, int dr, int dc, int rows, int cols) {
    MaskSlice out(rows, cols, m.spacing());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m.at(r, c)) out.set(r + dr, c + dc, true);
    return out;
}

}  // namespace

TEST_CASE("mask slice rejects an empty grid") {
    CHECK_THROWS_AS(MaskSlice(0, 4), cqa::DimensionError);
    CHECK_THROWS_AS(MaskSlice(4, 0), cqa::DimensionError);
    CHECK_THROWS_AS(MaskSlice(4, 4, Spacing{0.0, 1.0}), cqa::DomainError);
}

TEST_CASE("boundary points") {
    SUBCASE("single inside pixel") {
        MaskSlice m(1, 1);
        m.set(0, 0, true);
        auto b = boundary_points(m);
        REQUIRE(b.size() == 1);
        CHECK(b[0].y == 0.0);
        CHECK(b[0].x == 0.0);
    }
    SUBCASE("all-false mask") { CHECK(boundary_points(MaskSlice(5, 5)).empty()); }
    SUBCASE("3x3 block drops the centre") {
        auto px = boundary_pixels(rect(3, 3, 0, 0, 3, 3));
        CHECK(px.size() == 8);
        for (auto p : px) CHECK_FALSE((p.row == 1 && p.col == 1));
    }
    SUBCASE("points are scaled by spacing") {
        MaskSlice m(3, 3, Spacing{2.0, 0.5});
        m.set(2, 1, true);
        auto b = boundary_points(m);
        REQUIRE(b.size() == 1);
        CHECK(b[0].y == 4.0);
        CHECK(b[0].x == 0.5);
    }
}

TEST_CASE("dice examples") {
    auto a = rect(8, 8, 1, 1, 4, 4);
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, rect(8, 8, 5, 5, 2, 2)) == 0.0);
    CHECK(dice(a, rect(8, 8, 1, 3, 4, 4)) == 0.5);
    CHECK(dice(MaskSlice(4, 4), MaskSlice(4, 4)) == 1.0);
    CHECK_THROWS_AS(dice(MaskSlice(4, 4), MaskSlice(4, 5)), cqa::DimensionError);
    CHECK_THROWS_AS(dice(MaskSlice(4, 4), MaskSlice(4, 4, Spacing{1.0, 2.0})), cqa::DimensionError);
}

TEST_CASE("surface dice examples") {
    auto a = rect(10, 10, 2, 2, 5, 4);
    CHECK(surface_dice(a, a, 0.0) == 1.0);
    CHECK(surface_dice(a, a, 7.0) == 1.0);
    CHECK(surface_dice(a, rect(10, 10, 0, 0, 2, 2), std::numeric_limits<double>::infinity()) == 1.0);

    MaskSlice p(8, 8), q(8, 8);
    p.set(1, 1, true);
    q.set(1, 4, true);
    CHECK(surface_dice(p, q, 2.0) == 0.0);
    CHECK(surface_dice(p, q, 3.0) == 1.0);

    CHECK(surface_dice(MaskSlice(4, 4), MaskSlice(4, 4), 2.0) == 1.0);
    CHECK(surface_dice(p, MaskSlice(8, 8), 2.0) == 0.0);
    CHECK_THROWS_AS(surface_dice(p, q, -1.0), cqa::DomainError);
}

TEST_CASE("hd95 examples") {
    auto a = rect(10, 10, 2, 2, 5, 4);
    CHECK(hd95(a, a) == 0.0);
    MaskSlice p(10, 10), q(10, 10);
    p.set(0, 0, true);
    q.set(3, 4, true);
    CHECK(hd95(p, q) == 5.0);
    CHECK(std::isinf(hd95(p, MaskSlice(10, 10))));
    CHECK(std::isinf(hd95(MaskSlice(10, 10), p)));
    CHECK(hd95(MaskSlice(10, 10), MaskSlice(10, 10)) == 0.0);
}

TEST_CASE("empty-mask conventions are flagged") {
    MaskSlice e(6, 6);
    auto both = compute_metrics(e, e);
    CHECK(both.degenerate);
    CHECK(both.dsc == 1.0);
    CHECK(both.sdsc == 1.0);
    CHECK(both.hd95_mm == 0.0);

    auto one = compute_metrics(rect(6, 6, 1, 1, 2, 2), e);
    CHECK(one.degenerate);
    CHECK(one.dsc == 0.0);
    CHECK(one.sdsc == 0.0);
    CHECK(std::isinf(one.hd95_mm));

    auto fine = compute_metrics(rect(6, 6, 1, 1, 2, 2), rect(6, 6, 1, 1, 2, 2));
    CHECK_FALSE(fine.degenerate);
}

TEST_CASE("nearest-rank percentile") {
    std::vector<double> v;
    for (int i = 20; i >= 1; --i) v.push_back(i);
    CHECK(percentile95_nearest_rank(v) == 19.0);
    v.clear();
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    CHECK(percentile95_nearest_rank(v) == 95.0);
    CHECK(percentile95_nearest_rank({7.0}) == 7.0);
    CHECK(percentile95_nearest_rank({1.0, 2.0}) == 2.0);
    CHECK_THROWS_AS(percentile95_nearest_rank({}), cqa::EmptyInputError);
}

TEST_CASE("metrics match the all-pairs oracle on random pairs") {
    std::mt19937_64 g(12345);
    std::uniform_int_distribution<int> side(1, 32);
    const Spacing spacings[] = {{1.0, 1.0}, {0.5, 0.5}, {1.25, 0.8}, {3.0, 1.0}};
    for (int i = 0; i < 200; ++i) {
        const int rows = side(g), cols = side(g);
        const Spacing s = spacings[i % 4];
        auto a = oracle::random_mask(g, rows, cols, s);
        auto b = oracle::random_mask(g, rows, cols, s);
        const double tol = (i % 3) * 1.5;
        auto got = compute_metrics(a, b, tol);
        auto want = oracle::metrics(a, b, tol);
        CAPTURE(i);
        CHECK(got.dsc == want.dsc);
        CHECK(got.sdsc == want.sdsc);
        CHECK(got.hd95_mm == want.hd95);
        CHECK(dice(a, b) == want.dsc);
        CHECK(surface_dice(a, b, tol) == want.sdsc);
        CHECK(hd95(a, b) == want.hd95);
    }
}

TEST_CASE("metrics are symmetric, bounded and translation invariant") {
    std::mt19937_64 g(99);
    for (int i = 0; i < 100; ++i) {
        auto a = oracle::random_mask(g, 20, 20, Spacing{0.9, 1.1});
        auto b = oracle::random_mask(g, 20, 20, Spacing{0.9, 1.1});
        auto ab = compute_metrics(a, b);
        auto ba = compute_metrics(b, a);
        CHECK(ab.dsc == ba.dsc);
        CHECK(ab.sdsc == ba.sdsc);
        CHECK(ab.hd95_mm == ba.hd95_mm);
        CHECK(ab.dsc >= 0.0);
        CHECK(ab.dsc <= 1.0);
        CHECK(ab.sdsc >= 0.0);
        CHECK(ab.sdsc <= 1.0);
        CHECK(ab.hd95_mm >= 0.0);

        // Embed both in a larger grid at an offset; masks touching the old edge
        // change their boundary, so only interior-only masks are compared.
        bool edge = false;
        for (int k = 0; k < 20; ++k)
            edge = edge || a.at(0, k) || a.at(19, k) || a.at(k, 0) || a.at(k, 19) || b.at(0, k) || b.at(19, k) ||
                   b.at(k, 0) || b.at(k, 19);
        if (edge) continue;
        auto ta = shifted(a, 5, 3, 30, 30);
        auto tb = shifted(b, 5, 3, 30, 30);
        auto t = compute_metrics(ta, tb);
        CHECK(t.dsc == ab.dsc);
        CHECK(t.sdsc == ab.sdsc);
        CHECK(t.hd95_mm == ab.hd95_mm);
    }
}

TEST_CASE("identical nonempty masks score perfectly") {
    std::mt19937_64 g(5);
    for (int i = 0; i < 30; ++i) {
        auto a = oracle::random_mask(g, 16, 16, Spacing{});
        if (a.empty()) continue;
        auto m = compute_metrics(a, a);
        CHECK(m.dsc == 1.0);
        CHECK(m.sdsc == 1.0);
        CHECK(m.hd95_mm == 0.0);
    }
}

TEST_CASE("contour tracing") {
    SUBCASE("single pixel") {
        MaskSlice m(4, 4);
        m.set(2, 1, true);
        auto cs = trace_contours(m);
        REQUIRE(cs.size() == 1);
        REQUIRE(cs[0].size() == 1);
        CHECK(cs[0][0] == PixelIndex{2, 1});
    }
    SUBCASE("square ring visits each boundary pixel once, 8-adjacent in order") {
        auto m = rect(8, 8, 2, 2, 4, 4);
        auto cs = trace_contours(m);
        REQUIRE(cs.size() == 1);
        CHECK(cs[0].size() == 12);
        CHECK(cs[0].front() == PixelIndex{2, 2});
        for (std::size_t i = 0; i < cs[0].size(); ++i) {
            auto a = cs[0][i], b = cs[0][(i + 1) % cs[0].size()];
            CHECK(std::max(std::abs(a.row - b.row), std::abs(a.col - b.col)) == 1);
        }
    }
    SUBCASE("separate components and boundary membership") {
        std::mt19937_64 g(3);
        for (int i = 0; i < 50; ++i) {
            auto m = oracle::random_mask(g, 24, 24, Spacing{});
            auto bp = boundary_pixels(m);
            std::set<std::pair<int, int>> bset;
            for (auto p : bp) bset.insert({p.row, p.col});
            for (const auto& c : trace_contours(m))
                for (auto p : c) CHECK(bset.count({p.row, p.col}) == 1);
        }
        auto two = rect(10, 10, 0, 0, 2, 2);
        two.set(6, 6, true);
        CHECK(trace_contours(two).size() == 2);
    }
}

TEST_CASE("surrogate label examples") {
    SurrogateThresholds thr;
    CHECK(surrogate_label({0.95, 0.93, 2.0, false}, thr) == 2);
    auto pm = per_metric_classes({0.65, 0.72, 7.0, false}, thr);
    CHECK(pm.dsc == 0);
    CHECK(pm.sdsc == 1);
    CHECK(pm.hd95 == 0);
    CHECK(surrogate_label({0.65, 0.72, 7.0, false}, thr) == 1);
    CHECK(per_metric_classes({0.9, 0.0, 100.0, false}, thr).dsc == 2);
    CHECK(per_metric_classes({0.7, 0.7, 6.0, false}, thr).dsc == 1);
    CHECK(per_metric_classes({0.7, 0.7, 6.0, false}, thr).sdsc == 1);
    CHECK(per_metric_classes({0.7, 0.7, 6.0, false}, thr).hd95 == 1);
    CHECK(per_metric_classes({0.7, 0.7, 2.5, false}, thr).hd95 == 2);
    CHECK(per_metric_classes({0.0, 0.0, std::numeric_limits<double>::infinity(), true}, thr).hd95 == 0);

    thr.aggregation = Aggregation::min_rule;
    CHECK(surrogate_label({0.65, 0.72, 7.0, false}, thr) == 0);
}

TEST_CASE("max rule is monotone in each per-metric class") {
    const double dscs[] = {0.5, 0.7, 0.8, 0.9, 1.0};
    const double hds[] = {0.0, 2.5, 4.0, 6.0, 9.0};
    SurrogateThresholds thr;
    auto label = [&](int i, int j, int k) { return surrogate_label({dscs[i], dscs[j], hds[k], false}, thr); };
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int k = 0; k < 5; ++k) {
                if (i + 1 < 5) CHECK(label(i + 1, j, k) >= label(i, j, k));
                if (j + 1 < 5) CHECK(label(i, j + 1, k) >= label(i, j, k));
                if (k > 0) CHECK(label(i, j, k - 1) >= label(i, j, k));
            }
}

TEST_CASE("threshold validation") {
    SurrogateThresholds t;
    CHECK_NOTHROW(t.validate());
    t.dsc_lo = 0.95;
    CHECK_THROWS_AS(t.validate(), cqa::ConfigError);
    t = {};
    t.sdsc_hi = 1.1;
    CHECK_THROWS_AS(t.validate(), cqa::ConfigError);
    t = {};
    t.hd95_good_mm = 7.0;
    CHECK_THROWS_AS(t.validate(), cqa::ConfigError);
    t = {};
    t.hd95_good_mm = 0.0;
    CHECK_THROWS_AS(t.validate(), cqa::ConfigError);
}
