#pragma once
// CLI verbs and the dataset-level helpers they share with the review service.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cqa/boc_net.hpp"
#include "cqa/calibration.hpp"
#include "cqa/service/bundle.hpp"
#include "cqa/uq.hpp"

namespace cqa::service {

enum class LabelSource { surrogate, manual };
LabelSource label_source_from_string(const std::string& s);

// Surrogate label from labels.csv, or majority vote of the rater panel.
std::optional<int> reference_label(const BundleSlice& slice, LabelSource source);

// Network input for one slice: metric features or the two-channel grid.
std::vector<double> model_input(const BundleSlice& slice, const boc::NetworkConfig& net,
                                double sdsc_tolerance_mm = geom::kDefaultSurfaceToleranceMm);

// Every slice that has an image and a label under `source`.
std::vector<boc::Example> examples_from(const std::vector<CaseBundle>& cases, const boc::NetworkConfig& net,
                                        LabelSource source,
                                        double sdsc_tolerance_mm = geom::kDefaultSurfaceToleranceMm);

struct SlicePrediction {
    std::string slice_id;
    uq::McProbs mc;
    uq::PredictedQuality quality;
};

// MC-dropout prediction for every slice; the pass seeds of a slice derive from
// (seed, slice_id) so results do not depend on dataset order.
std::vector<SlicePrediction> predict_dataset(const std::vector<CaseBundle>& cases,
                                             const boc::ModelParameters& params, int T, std::uint64_t seed,
                                             uq::ClassRule rule = uq::ClassRule::conditional,
                                             double sdsc_tolerance_mm = geom::kDefaultSurfaceToleranceMm);

// Calibration records for slices that carry a label under `source`.
std::vector<calib::CalRecord> join_records(const std::vector<SlicePrediction>& preds,
                                           const std::vector<CaseBundle>& cases, LabelSource source);

// Entry point of the `cqa` tool. Verbs: synth, metrics, surrogate-label, train,
// fine-tune, predict, calibrate, evaluate, serve. Returns the process exit
// status; failures print {"error", "message"} JSON to `err`.
int run_pipeline(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cqa::service
