#include "cqa/uq.hpp"

#include <algorithm>
#include <cmath>

#include "cqa/errors.hpp"

namespace cqa::uq {

namespace {

void require_passes(const McProbs& mc) {
    if (mc.pairs.empty()) throw EmptyInputError("MC probabilities need at least one pass");
}

}  // namespace

Moments per_pass_moments(double f1, double f2) {
    if (!(f1 >= 0.0 && f1 <= 1.0) || !(f2 >= 0.0 && f2 <= 1.0))
        throw DomainError("conditional probabilities must lie in [0, 1]");
    const double a = 1.0 + f2;
    // Clamped: rounding can leave -1e-17 where the exact value is 0.
    return {f1 + f1 * f2, std::max(0.0, f1 + 3.0 * f1 * f2 - f1 * f1 * a * a)};
}

Moments mc_moments(const McProbs& mc) {
    require_passes(mc);
    const double T = static_cast<double>(mc.passes());
    double sum_mean = 0.0, sum_var = 0.0, sum_mean_sq = 0.0;
    for (const auto& [f1, f2] : mc.pairs) {
        const auto m = per_pass_moments(f1, f2);
        sum_mean += m.mean;
        sum_var += m.variance;
        sum_mean_sq += m.mean * m.mean;
    }
    const double mean = sum_mean / T;
    return {mean, std::max(0.0, sum_var / T + sum_mean_sq / T - mean * mean)};
}

ClassPrediction predict_class(const McProbs& mc, ClassRule rule) {
    require_passes(mc);
    const double T = static_cast<double>(mc.passes());
    double s1 = 0.0, s2 = 0.0, s12 = 0.0;
    for (const auto& [f1, f2] : mc.pairs) {
        s1 += f1;
        s2 += f2;
        s12 += f1 * f2;
    }
    ClassPrediction p;
    p.p1_hat = s1 / T;
    p.p2_hat = s2 / T;
    const double second = rule == ClassRule::conditional ? p.p2_hat : s12 / T;
    p.predicted_class = (p.p1_hat > 0.5 ? 1 : 0) + (second > 0.5 ? 1 : 0);
    return p;
}

std::array<double, 3> class_probabilities(const McProbs& mc) {
    require_passes(mc);
    const double T = static_cast<double>(mc.passes());
    double ge1 = 0.0, ge2 = 0.0;
    for (const auto& [f1, f2] : mc.pairs) {
        ge1 += f1;
        ge2 += f1 * f2;
    }
    ge1 /= T;
    ge2 /= T;
    return {1.0 - ge1, ge1 - ge2, ge2};
}

PredictedQuality summarize(const McProbs& mc, ClassRule rule) {
    const auto m = mc_moments(mc);
    const auto c = predict_class(mc, rule);
    PredictedQuality q;
    q.mean = m.mean;
    q.variance = m.variance;
    q.p1_hat = c.p1_hat;
    q.p2_hat = c.p2_hat;
    q.class_probs = class_probabilities(mc);
    q.predicted_class = c.predicted_class;
    return q;
}

RaterPanel::RaterPanel(std::vector<int> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw EmptyInputError("rater panel needs at least one rater");
    for (int l : labels_) {
        if (l < 0 || l > 2) throw DomainError("rater label out of range: " + std::to_string(l));
        ++counts_[static_cast<std::size_t>(l)];
    }
}

std::array<double, 3> RaterPanel::probabilities() const {
    const double n = static_cast<double>(labels_.size());
    return {counts_[0] / n, counts_[1] / n, counts_[2] / n};
}

double manual_entropy(const RaterPanel& panel) {
    double h = 0.0;
    for (double p : panel.probabilities()) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

int majority_vote(const RaterPanel& panel) {
    const auto& c = panel.counts();
    const std::size_t n = panel.raters();
    for (int j = 0; j < 3; ++j) {
        if (2 * static_cast<std::size_t>(c[static_cast<std::size_t>(j)]) > n) return j;
    }
    return 1;
}

}  // namespace cqa::uq
