#pragma once
// On-disk case bundles. One directory per subject:
//
//   meta.json            {"subject_id", "spacing_mm": [row, col], "slice_count"}
//   auto/slice_<n>.png   8-bit, nonzero = inside
//   ref/slice_<n>.png    optional reference contour
//   images/slice_<n>.png optional pseudo-CT (intensity * 255)
//   labels.csv           optional: slice_id,label,dsc,sdsc,hd95_mm
//   raters.csv           optional: slice_id,rater_1,...,rater_n

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cqa/geometry.hpp"
#include "cqa/image.hpp"
#include "cqa/synthgen.hpp"

namespace cqa::service {

struct BundleSlice {
    int index = 0;
    std::optional<Image> image;
    geom::MaskSlice auto_mask;
    std::optional<geom::MaskSlice> ref_mask;
    std::optional<int> surrogate_label;
    std::optional<geom::GeomMetrics> metrics;
    std::vector<int> rater_labels;
};

struct CaseBundle {
    std::string subject_id;
    geom::Spacing spacing;
    std::vector<BundleSlice> slices;
};

// "<subject_id>:<slice index>"
std::string slice_id(const std::string& subject_id, int index);

CaseBundle load_case_bundle(const std::filesystem::path& dir);
void write_case_bundle(const std::filesystem::path& dir, const CaseBundle& bundle);

// A dataset root holds one bundle per subdirectory (sorted by name); a root
// that itself holds meta.json is a single bundle.
std::vector<CaseBundle> load_dataset(const std::filesystem::path& root);

// Slice-level simulated rater panels: each rater reads the metrics with its own
// noise and applies its own thresholds.
struct RaterModel {
    geom::SurrogateThresholds thresholds{0.92, 0.75, 0.92, 0.75, 2.0, 5.0, geom::Aggregation::max_rule};
    double dsc_sigma = 0.03;
    double sdsc_sigma = 0.03;
    double hd95_rel_sigma = 0.15;
    int raters = 3;
};
std::vector<int> simulate_panel(const geom::GeomMetrics& m, const RaterModel& model, std::uint64_t seed);

// Groups consecutive samples into subjects "subj_0000", ... of
// `slices_per_subject` slices and writes them under `root`. When raters > 0,
// rater panels are simulated per slice.
void write_synth_dataset(const std::filesystem::path& root, const synth::Dataset& ds,
                         int slices_per_subject, const RaterModel& raters, std::uint64_t seed);

// Samples to bundles in memory (same grouping and panels as write_synth_dataset,
// images quantized to 8 bits as they would be on disk).
std::vector<CaseBundle> bundles_from_samples(const std::vector<synth::SynthSample>& samples,
                                             int slices_per_subject, const RaterModel& raters,
                                             std::uint64_t seed, const std::string& prefix = "subj_");

}  // namespace cqa::service
