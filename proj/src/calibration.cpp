#include "cqa/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace cqa::calib {

namespace {

bool record_less(const CalRecord& a, const CalRecord& b) {
    if (a.uncertainty != b.uncertainty) return a.uncertainty < b.uncertainty;
    if (a.slice_id != b.slice_id) return a.slice_id < b.slice_id;
    if (a.predicted_class != b.predicted_class) return a.predicted_class < b.predicted_class;
    return a.reference_class < b.reference_class;
}

std::string describe_unachievable(double target, double acc, double cov) {
    std::ostringstream os;
    os << "target accuracy " << target << " is not reached by any prefix; best attainable accuracy "
       << acc << " at coverage " << cov;
    return os.str();
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

UnachievableTarget::UnachievableTarget(double target, double best_accuracy, double best_coverage)
    : Error("unachievable_target", describe_unachievable(target, best_accuracy, best_coverage)),
      best_accuracy_(best_accuracy),
      best_coverage_(best_coverage) {}

std::vector<CurveBin> equal_count_bins(const std::vector<CalRecord>& sorted, std::size_t n_bins) {
    const std::size_t n = sorted.size();
    const std::size_t bins = std::min(n_bins, n);
    std::vector<CurveBin> out;
    for (std::size_t b = 0; b < bins; ++b) {
        CurveBin bin;
        bin.first = b * n / bins;
        bin.last = (b + 1) * n / bins;
        double u = 0.0;
        std::size_t correct = 0;
        for (std::size_t i = bin.first; i < bin.last; ++i) {
            u += sorted[i].uncertainty;
            correct += sorted[i].correct() ? 1 : 0;
        }
        const double count = static_cast<double>(bin.last - bin.first);
        bin.mean_uncertainty = u / count;
        bin.accuracy = static_cast<double>(correct) / count;
        out.push_back(bin);
    }
    return out;
}

CalibrationCurve build_curve(std::vector<CalRecord> records, std::size_t n_bins) {
    if (records.empty()) throw EmptyInputError("calibration curve needs at least one record");
    for (const auto& r : records) {
        if (!(r.uncertainty >= 0.0)) throw DomainError("uncertainty must be a non-negative number (" + r.slice_id + ")");
    }
    std::stable_sort(records.begin(), records.end(), record_less);
    CalibrationCurve c;
    c.cumulative_accuracy.reserve(records.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        correct += records[i].correct() ? 1 : 0;
        c.cumulative_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(i + 1));
    }
    c.bins = equal_count_bins(records, n_bins);
    c.records = std::move(records);
    return c;
}

ThresholdResult find_threshold(const CalibrationCurve& curve, double target_accuracy) {
    if (curve.records.empty()) throw EmptyInputError("empty calibration curve");
    if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) throw DomainError("target accuracy must be in (0, 1]");
    const std::size_t n = curve.records.size();
    double best_acc = -1.0, best_cov = 0.0;
    for (std::size_t len = n; len >= 1; --len) {
        // Only prefixes that end a tie group are admissible.
        if (len < n && curve.records[len].uncertainty == curve.records[len - 1].uncertainty) continue;
        const double acc = curve.cumulative_accuracy[len - 1];
        if (acc >= target_accuracy) {
            ThresholdResult r;
            r.target_accuracy = target_accuracy;
            r.tau = curve.records[len - 1].uncertainty;
            r.accepted = len;
            r.coverage = static_cast<double>(len) / static_cast<double>(n);
            r.achieved_accuracy = acc;
            return r;
        }
        if (acc > best_acc) {
            best_acc = acc;
            best_cov = static_cast<double>(len) / static_cast<double>(n);
        }
    }
    throw UnachievableTarget(target_accuracy, best_acc, best_cov);
}

double auc_per_class(const std::vector<CalRecord>& records, int j) {
    if (j < 0 || j > 2) throw DomainError("class index out of range");
    std::vector<double> scores;
    std::vector<bool> positive;
    for (const auto& r : records) {
        if (!r.class_probs) throw DomainError("record " + r.slice_id + " carries no class probabilities");
        scores.push_back((*r.class_probs)[static_cast<std::size_t>(j)]);
        positive.push_back(r.reference_class == j);
    }
    const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
    const double n_neg = static_cast<double>(positive.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC needs both positive and negative records for class " + std::to_string(j));
    const auto ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (positive[i]) rank_sum += ranks[i];
    }
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

SelectiveReport selective_evaluate(const std::vector<CalRecord>& records, double tau) {
    SelectiveReport rep;
    rep.tau = tau;
    rep.total = records.size();
    std::size_t correct_all = 0, correct_acc = 0;
    for (const auto& r : records) {
        correct_all += r.correct() ? 1 : 0;
        if (!(r.uncertainty <= tau)) continue;
        ++rep.accepted;
        if (r.correct()) {
            ++correct_acc;
        } else {
            rep.bad_cases.push_back(r);
        }
        if (r.reference_class >= 0 && r.reference_class <= 2 && r.predicted_class >= 0 && r.predicted_class <= 2)
            ++rep.confusion[static_cast<std::size_t>(r.reference_class)][static_cast<std::size_t>(r.predicted_class)];
    }
    if (rep.total > 0) {
        rep.coverage = static_cast<double>(rep.accepted) / static_cast<double>(rep.total);
        rep.overall_accuracy = static_cast<double>(correct_all) / static_cast<double>(rep.total);
    }
    if (rep.accepted > 0) rep.selective_accuracy = static_cast<double>(correct_acc) / static_cast<double>(rep.accepted);

    auto ratio = [](double num, double den) -> std::optional<double> {
        if (den == 0.0) return std::nullopt;
        return num / den;
    };
    auto f1_of = [](std::optional<double> p, std::optional<double> r) -> std::optional<double> {
        if (!p || !r) return std::nullopt;
        if (*p + *r == 0.0) return 0.0;
        return 2.0 * *p * *r / (*p + *r);
    };
    const auto& cm = rep.confusion;
    for (std::size_t j = 0; j < 3; ++j) {
        double tp = static_cast<double>(cm[j][j]), fp = 0, fn = 0, tn = 0;
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) {
                if (a == j && b == j) continue;
                const double v = static_cast<double>(cm[a][b]);
                if (a == j) fn += v;
                else if (b == j) fp += v;
                else tn += v;
            }
        }
        auto& cs = rep.per_class[j];
        cs.support = static_cast<std::size_t>(tp + fn);
        cs.precision = ratio(tp, tp + fp);
        cs.recall = ratio(tp, tp + fn);
        cs.f1 = f1_of(cs.precision, cs.recall);

        const double s_pos = tp + fn, s_neg = tn + fp;
        if (s_pos + s_neg > 0) {
            const auto p_neg = ratio(tn, tn + fn), r_neg = ratio(tn, tn + fp);
            const auto f_neg = f1_of(p_neg, r_neg);
            // Undefined components count as 0, as in the usual zero-division convention.
            auto weighted = [&](std::optional<double> pos, std::optional<double> neg) {
                return (s_pos * pos.value_or(0.0) + s_neg * neg.value_or(0.0)) / (s_pos + s_neg);
            };
            cs.weighted_precision = weighted(cs.precision, p_neg);
            cs.weighted_recall = weighted(cs.recall, r_neg);
            cs.weighted_f1 = weighted(f1_of(cs.precision.value_or(0.0), cs.recall.value_or(0.0)), f_neg);
        }
        const bool have_probs = !records.empty() &&
            std::all_of(records.begin(), records.end(), [](const CalRecord& r) { return r.class_probs.has_value(); });
        if (have_probs) {
            try {
                cs.auc = auc_per_class(records, static_cast<int>(j));
            } catch (const UndefinedMetricError&) {
            }
        }
    }
    return rep;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("spearman inputs differ in length");
    if (x.size() < 2) throw UndefinedMetricError("spearman needs at least two points");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<AgreementGroup> agreement_groups(const std::vector<uq::RaterPanel>& panels,
                                             const std::vector<double>& predicted_variance) {
    if (panels.size() != predicted_variance.size())
        throw DimensionError("panels and predictions differ in length");
    // Entropies of equal vote-count patterns are bit-identical; key on a
    // rounded value anyway so panel sizes that differ only in scale merge.
    std::map<long long, AgreementGroup> groups;
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const double h = uq::manual_entropy(panels[i]);
        auto& g = groups[std::llround(h * 1e9)];
        g.entropy = h;
        g.mean_variance += predicted_variance[i];
        ++g.count;
    }
    std::vector<AgreementGroup> out;
    for (auto& [key, g] : groups) {
        g.mean_variance /= static_cast<double>(g.count);
        out.push_back(g);
    }
    return out;
}

double uncertainty_agreement(const std::vector<uq::RaterPanel>& panels,
                             const std::vector<double>& predicted_variance) {
    const auto groups = agreement_groups(panels, predicted_variance);
    if (groups.size() < 2) throw UndefinedMetricError("uncertainty agreement needs at least two entropy groups");
    std::vector<double> h, v;
    for (const auto& g : groups) {
        h.push_back(g.entropy);
        v.push_back(g.mean_variance);
    }
    return spearman(h, v);
}

}  // namespace cqa::calib
