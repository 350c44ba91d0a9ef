#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cqa/errors.hpp"
#include "cqa/uq.hpp"
#include "oracles.hpp"

using namespace cqa;
using namespace cqa::uq;

namespace {

McProbs mc_of(std::vector<std::array<double, 2>> pairs) { return McProbs{std::move(pairs)}; }

}  // namespace

TEST_CASE("per-pass moment examples") {
    auto a = per_pass_moments(1.0, 1.0);
    CHECK(a.mean == 2.0);
    CHECK(a.variance == 0.0);
    auto b = per_pass_moments(0.5, 0.0);
    CHECK(b.mean == 0.5);
    CHECK(b.variance == 0.25);
    auto c = per_pass_moments(0.8, 0.5);
    CHECK(c.mean == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(c.variance == doctest::Approx(0.56).epsilon(1e-15));
    CHECK_THROWS_AS(per_pass_moments(1.1, 0.5), DomainError);
    CHECK_THROWS_AS(per_pass_moments(0.5, -0.1), DomainError);
    CHECK_THROWS_AS(per_pass_moments(std::nan(""), 0.5), DomainError);
}

TEST_CASE("mc moment examples") {
    auto one = mc_moments(mc_of({{0.8, 0.5}}));
    auto ref = per_pass_moments(0.8, 0.5);
    CHECK(one.mean == ref.mean);
    CHECK(one.variance == doctest::Approx(ref.variance).epsilon(1e-15));
    auto mix = mc_moments(mc_of({{1.0, 1.0}, {0.0, 0.37}}));
    CHECK(mix.mean == 1.0);
    CHECK(mix.variance == 1.0);
    CHECK_THROWS_AS(mc_moments(McProbs{}), EmptyInputError);
}

TEST_CASE("moments match outcome enumeration") {
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> T(1, 30);
    double max_var = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double f1 = u(g), f2 = u(g);
        auto m = per_pass_moments(f1, f2);
        auto o = oracle::enumerate_moments(oracle::outcome_probs(f1, f2));
        CHECK(std::abs(m.mean - o[0]) <= 1e-12);
        CHECK(std::abs(m.variance - o[1]) <= 1e-12);
        CHECK(m.mean >= 0.0);
        CHECK(m.mean <= 2.0);
        CHECK(m.variance >= 0.0);
        CHECK(m.variance <= 1.0);
        max_var = std::max(max_var, m.variance);
    }
    for (int i = 0; i < 2000; ++i) {
        McProbs mc;
        const int t = T(g);
        for (int k = 0; k < t; ++k) mc.pairs.push_back({u(g), u(g)});
        auto m = mc_moments(mc);
        auto o = oracle::mixture_moments(mc.pairs);
        CHECK(std::abs(m.mean - o[0]) <= 1e-12);
        CHECK(std::abs(m.variance - o[1]) <= 1e-12);
        CHECK(m.variance <= 1.0);
    }
    CHECK(max_var > 0.9);
}

TEST_CASE("class prediction") {
    CHECK(predict_class(mc_of({{0.9, 0.7}})).predicted_class == 2);
    CHECK(predict_class(mc_of({{0.6, 0.4}})).predicted_class == 1);
    CHECK(predict_class(mc_of({{0.4, 0.9}})).predicted_class == 1);
    CHECK(predict_class(mc_of({{0.4, 0.9}}), ClassRule::cumulative).predicted_class == 0);
    CHECK(predict_class(mc_of({{0.5, 0.5}})).predicted_class == 0);
    auto p = predict_class(mc_of({{0.2, 0.6}, {0.8, 0.2}}));
    CHECK(p.p1_hat == 0.5);
    CHECK(p.p2_hat == doctest::Approx(0.4));
    CHECK(p.predicted_class == 0);
}

TEST_CASE("cumulative rule is rank monotone") {
    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5000; ++i) {
        McProbs mc;
        for (int k = 0; k < 5; ++k) mc.pairs.push_back({u(g), u(g)});
        auto p = predict_class(mc, ClassRule::cumulative);
        double s12 = 0.0;
        for (auto& pr : mc.pairs) s12 += pr[0] * pr[1] / 5.0;
        const int y1 = p.p1_hat > 0.5, y2 = s12 > 0.5;
        CHECK(y1 >= y2);
    }
}

TEST_CASE("class probabilities") {
    auto a = class_probabilities(mc_of({{1.0, 1.0}, {1.0, 1.0}}));
    CHECK(a == std::array<double, 3>{0.0, 0.0, 1.0});
    auto b = class_probabilities(mc_of({{0.5, 0.5}}));
    CHECK(b == std::array<double, 3>{0.5, 0.25, 0.25});
    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        McProbs mc;
        for (int k = 0; k < 7; ++k) mc.pairs.push_back({u(g), u(g)});
        auto q = summarize(mc);
        CHECK(q.class_probs[1] >= 0.0);
        CHECK(std::abs(q.class_probs[0] + q.class_probs[1] + q.class_probs[2] - 1.0) <= 1e-9);
        CHECK(std::abs(q.mean - (q.class_probs[1] + 2.0 * q.class_probs[2])) <= 1e-9);
        CHECK(q.variance >= 0.0);
    }
}

TEST_CASE("manual entropy") {
    CHECK(manual_entropy(RaterPanel({2, 2, 2})) == 0.0);
    CHECK(manual_entropy(RaterPanel({2, 2, 1})) == doctest::Approx(0.636514).epsilon(1e-6));
    CHECK(manual_entropy(RaterPanel({0, 1, 2})) == doctest::Approx(1.098612).epsilon(1e-6));
    CHECK(manual_entropy(RaterPanel({1, 2, 2})) == manual_entropy(RaterPanel({2, 1, 2})));
    const double hmax = manual_entropy(RaterPanel({0, 1, 2}));
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) CHECK(manual_entropy(RaterPanel({a, b, c})) <= hmax + 1e-15);
    CHECK_THROWS_AS(RaterPanel({}), EmptyInputError);
    CHECK_THROWS_AS(RaterPanel({0, 3}), DomainError);
}

TEST_CASE("majority vote") {
    CHECK(majority_vote(RaterPanel({2, 2, 0})) == 2);
    CHECK(majority_vote(RaterPanel({0, 1, 2})) == 1);
    CHECK(majority_vote(RaterPanel({1, 1, 1})) == 1);
    CHECK(majority_vote(RaterPanel({0, 0, 2})) == 0);
    CHECK(majority_vote(RaterPanel({0, 0, 2, 2})) == 1);
    CHECK(majority_vote(RaterPanel({0})) == 0);
}
