#pragma once
// Moments of the three-class ordinal predictive distribution, class
// prediction from MC-dropout passes, rater-panel entropy and majority vote.

#include <array>
#include <vector>

namespace cqa::uq {

// One (f1, f2) pair per stochastic pass: f1 = P(y >= 1), f2 = P(y >= 2 | y >= 1).
struct McProbs {
    std::vector<std::array<double, 2>> pairs;
    std::size_t passes() const { return pairs.size(); }
};

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

// mean = f1 + f1 f2, variance = f1 + 3 f1 f2 - f1^2 (1 + f2)^2.
Moments per_pass_moments(double f1, double f2);

// MC estimators: mean of per-pass means, and variance = mean of per-pass
// variances + variance of per-pass means (law of total variance).
Moments mc_moments(const McProbs& mc);

enum class ClassRule { conditional, cumulative };

struct ClassPrediction {
    int predicted_class = 0;
    double p1_hat = 0.0;  // mean of f1
    double p2_hat = 0.0;  // mean of f2 (unweighted)
};

// conditional: 1{p1_hat > 0.5} + 1{p2_hat > 0.5}.
// cumulative:  1{p1_hat > 0.5} + 1{mean(f1 f2) > 0.5}.
ClassPrediction predict_class(const McProbs& mc, ClassRule rule = ClassRule::conditional);

// (P0, P1, P2) from the pass-averaged chain-rule marginals.
std::array<double, 3> class_probabilities(const McProbs& mc);

struct PredictedQuality {
    double mean = 0.0;
    double variance = 0.0;
    double p1_hat = 0.0;
    double p2_hat = 0.0;
    std::array<double, 3> class_probs{};
    int predicted_class = 0;
};

PredictedQuality summarize(const McProbs& mc, ClassRule rule = ClassRule::conditional);

class RaterPanel {
public:
    explicit RaterPanel(std::vector<int> labels);

    const std::vector<int>& labels() const { return labels_; }
    const std::array<int, 3>& counts() const { return counts_; }
    std::array<double, 3> probabilities() const;
    std::size_t raters() const { return labels_.size(); }

private:
    std::vector<int> labels_;
    std::array<int, 3> counts_{};
};

// -sum p_j ln p_j in nats, 0 ln 0 = 0.
double manual_entropy(const RaterPanel& panel);

// Strict majority; with no strict majority the contour is assigned class 1.
int majority_vote(const RaterPanel& panel);

}  // namespace cqa::uq
