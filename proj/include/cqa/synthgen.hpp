#pragma once
// Synthetic reference shapes, pseudo-CT images and degraded auto-contours with
// surrogate quality labels.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cqa/geometry.hpp"
#include "cqa/image.hpp"

namespace cqa::synth {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    static Range symmetric(double half_width) { return {-half_width, half_width}; }
    static Range fixed(double v) { return {v, v}; }
};

struct PerturbationParams {
    Range rotation_deg = Range::symmetric(12.0);
    Range scale{0.85, 1.15};
    Range translation_row_mm = Range::symmetric(3.0);
    Range translation_col_mm = Range::symmetric(3.0);
    int elastic_grid = 4;
    double elastic_mag_mm = 7.0;
    std::uint64_t seed = 0;

    // Ranges ordered, scale positive, elastic_grid >= 2, elastic_mag_mm >= 0.
    void validate() const;
    static PerturbationParams identity();
    // Every range shrunk towards the identity transform by `factor` in [0, inf).
    PerturbationParams scaled(double factor) const;
};

// Applies, in order, rotation about the grid centre, scaling, translation and
// an elastic displacement field. Implemented by reverse mapping: each output
// pixel samples the input at the inverse-transformed position (nearest
// neighbour), the elastic field being inverted to first order.
geom::MaskSlice perturb_mask(const geom::MaskSlice& mask, const PerturbationParams& params,
                             std::uint64_t seed);
inline geom::MaskSlice perturb_mask(const geom::MaskSlice& mask, const PerturbationParams& params) {
    return perturb_mask(mask, params, params.seed);
}

enum class ShapeKind { ellipse, bean, blob };
std::string to_string(ShapeKind kind);
ShapeKind shape_from_string(const std::string& name);

struct GridSpec {
    int rows = 64;
    int cols = 64;
    geom::Spacing spacing{1.0, 1.0};
};

// Random catalog shape roughly centred on the grid.
geom::MaskSlice make_shape(ShapeKind kind, const GridSpec& grid, std::uint64_t seed);

// Intensity model: smooth background around 0.3, +0.4 inside the reference,
// Gaussian noise sigma 0.05, clamped to [0, 1].
struct ImageModel {
    double background = 0.3;
    double interior_offset = 0.4;
    double noise_sigma = 0.05;
};
Image make_pseudo_ct(const geom::MaskSlice& ref, const ImageModel& model, std::uint64_t seed);

struct SynthSample {
    Image image;
    geom::MaskSlice ref_mask;
    geom::MaskSlice auto_mask;
    geom::GeomMetrics metrics;
    int label = 0;
    std::uint64_t seed_used = 0;
    ShapeKind shape = ShapeKind::ellipse;
    double severity = 0.0;
};

struct DatasetOptions {
    GridSpec grid{};
    ImageModel image{};
    double sdsc_tolerance_mm = geom::kDefaultSurfaceToleranceMm;
    // Each sample perturbs with params.scaled(severity), severity ~ U(0, 1).
    // When false every sample uses params unchanged.
    bool sample_severity = true;
    // Regenerate with adjusted ranges until each class holds more than 10%.
    bool ensure_balance = false;
    int max_balance_attempts = 8;
};

struct Dataset {
    std::vector<SynthSample> samples;
    std::array<std::size_t, 3> histogram{};
    PerturbationParams params_used{};
    bool balanced = false;
};

// Per-sample seeds are derive_seed(seed, index), so sample i is independent of n.
Dataset generate_dataset(std::size_t n, const std::vector<ShapeKind>& catalog,
                         const PerturbationParams& params, const geom::SurrogateThresholds& thr,
                         std::uint64_t seed, const DatasetOptions& options = {});

std::array<std::size_t, 3> class_histogram(const std::vector<SynthSample>& samples);

}  // namespace cqa::synth
