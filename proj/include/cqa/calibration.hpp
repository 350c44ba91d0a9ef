#pragma once
// Accuracy-vs-uncertainty curves, uncertainty threshold selection for a target
// accuracy, and selective (accept/abstain) evaluation.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cqa/errors.hpp"
#include "cqa/uq.hpp"

namespace cqa::calib {

struct CalRecord {
    std::string slice_id;
    double uncertainty = 0.0;
    int predicted_class = 0;
    int reference_class = 0;
    // Needed only for AUC.
    std::optional<std::array<double, 3>> class_probs;

    bool correct() const { return predicted_class == reference_class; }
};

struct CurveBin {
    std::size_t first = 0;  // index range [first, last) into the sorted records
    std::size_t last = 0;
    double mean_uncertainty = 0.0;
    double accuracy = 0.0;
};

struct CalibrationCurve {
    std::vector<CalRecord> records;            // ascending (uncertainty, slice_id)
    std::vector<double> cumulative_accuracy;   // [i] = accuracy of the first i+1 records
    std::vector<CurveBin> bins;                // equal-count, for plotting only
};

inline constexpr std::size_t kDefaultCurveBins = 20;

CalibrationCurve build_curve(std::vector<CalRecord> records, std::size_t n_bins = kDefaultCurveBins);

// Equal-count bins over already sorted records (fewer bins when n < n_bins).
std::vector<CurveBin> equal_count_bins(const std::vector<CalRecord>& sorted, std::size_t n_bins);

struct ThresholdResult {
    double target_accuracy = 0.0;
    double tau = 0.0;
    double coverage = 0.0;
    double achieved_accuracy = 0.0;
    std::size_t accepted = 0;
};

class UnachievableTarget : public Error {
public:
    UnachievableTarget(double target, double best_accuracy, double best_coverage);
    double best_accuracy() const { return best_accuracy_; }
    double best_coverage() const { return best_coverage_; }

private:
    double best_accuracy_;
    double best_coverage_;
};

// tau is the uncertainty closing the longest prefix whose cumulative accuracy
// reaches the target. Records sharing an uncertainty value enter or leave the
// prefix together.
ThresholdResult find_threshold(const CalibrationCurve& curve, double target_accuracy);

struct ClassStats {
    std::size_t support = 0;  // accepted records whose reference is this class
    std::optional<double> precision, recall, f1;
    // One-vs-rest metrics averaged over the positive and negative sides,
    // weighted by their supports.
    std::optional<double> weighted_precision, weighted_recall, weighted_f1;
    std::optional<double> auc;  // over all records, from class probabilities
};

struct SelectiveReport {
    double tau = 0.0;
    std::size_t total = 0;
    std::size_t accepted = 0;
    double coverage = 0.0;
    std::optional<double> selective_accuracy;  // absent when nothing is accepted
    std::optional<double> overall_accuracy;    // absent for an empty record set
    std::array<std::array<std::size_t, 3>, 3> confusion{};  // [reference][predicted], accepted only
    std::array<ClassStats, 3> per_class{};
    std::vector<CalRecord> bad_cases;  // accepted but wrong
};

// Accepts records with uncertainty <= tau.
SelectiveReport selective_evaluate(const std::vector<CalRecord>& records, double tau);

// One-vs-rest ROC AUC of class j using P_j as score; ties count one half.
double auc_per_class(const std::vector<CalRecord>& records, int j);

// Spearman rank correlation with average ranks for ties (Pearson correlation
// of the ranks). Returns 0 when either rank vector is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct AgreementGroup {
    double entropy = 0.0;
    double mean_variance = 0.0;
    std::size_t count = 0;
};

// Slices grouped by rater-panel entropy; groups ordered by entropy.
std::vector<AgreementGroup> agreement_groups(const std::vector<uq::RaterPanel>& panels,
                                             const std::vector<double>& predicted_variance);

// Spearman correlation between group entropy and group mean predicted variance.
double uncertainty_agreement(const std::vector<uq::RaterPanel>& panels,
                             const std::vector<double>& predicted_variance);

}  // namespace cqa::calib
