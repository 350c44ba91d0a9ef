#pragma once
// Raster contour masks, overlap/surface/boundary-distance metrics and the
// surrogate quality labeling rules.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace cqa::geom {

struct Spacing {
    double row_mm = 1.0;
    double col_mm = 1.0;
    bool operator==(const Spacing&) const = default;
};

// A 2D binary slice. Pixels are stored row-major, nonzero = inside.
class MaskSlice {
public:
    MaskSlice() = default;
    MaskSlice(int rows, int cols, Spacing spacing = {}, std::string subject_id = {},
              int slice_index = 0);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    const Spacing& spacing() const { return spacing_; }
    const std::string& subject_id() const { return subject_id_; }
    int slice_index() const { return slice_index_; }
    void set_subject(std::string id, int slice_index) {
        subject_id_ = std::move(id);
        slice_index_ = slice_index;
    }

    bool at(int r, int c) const { return pixels_[index(r, c)] != 0; }
    void set(int r, int c, bool inside) { pixels_[index(r, c)] = inside ? 1 : 0; }
    // Out-of-grid reads return false.
    bool inside(int r, int c) const {
        return r >= 0 && c >= 0 && r < rows_ && c < cols_ && at(r, c);
    }

    std::size_t area_px() const;
    bool empty() const { return area_px() == 0; }
    const std::vector<std::uint8_t>& data() const { return pixels_; }

    bool same_grid(const MaskSlice& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && spacing_ == other.spacing_;
    }
    bool operator==(const MaskSlice& other) const {
        return same_grid(other) && pixels_ == other.pixels_;
    }

private:
    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
               static_cast<std::size_t>(c);
    }

    int rows_ = 0;
    int cols_ = 0;
    Spacing spacing_{};
    std::string subject_id_;
    int slice_index_ = 0;
    std::vector<std::uint8_t> pixels_;
};

struct PixelIndex {
    int row = 0;
    int col = 0;
    bool operator==(const PixelIndex&) const = default;
};

struct PointMm {
    double y = 0.0;
    double x = 0.0;
};

// Distance in mm between two pixel centres. Differences are taken in integer
// pixel units before scaling so the result is translation invariant bit for bit.
double pixel_distance(PixelIndex a, PixelIndex b, const Spacing& s);

// Inside pixels with at least one 4-neighbour outside the mask or off-grid,
// in row-major order.
std::vector<PixelIndex> boundary_pixels(const MaskSlice& mask);
std::vector<PointMm> boundary_points(const MaskSlice& mask);

// For every point of `from`, distance to the nearest point of `to`.
// `to` must be nonempty.
std::vector<double> directed_distances(const std::vector<PixelIndex>& from,
                                       const std::vector<PixelIndex>& to, const Spacing& s);

// Outer boundary of every 8-connected component as a closed polyline of pixel
// indices (Moore-neighbour tracing, clockwise in image coordinates). Components
// are ordered by their first pixel in row-major order.
std::vector<std::vector<PixelIndex>> trace_contours(const MaskSlice& mask);

inline constexpr double kDefaultSurfaceToleranceMm = 2.0;

struct GeomMetrics {
    double dsc = 1.0;
    double sdsc = 1.0;
    double hd95_mm = 0.0;
    // Set when at least one mask is empty and the empty-mask conventions applied.
    bool degenerate = false;
};

double dice(const MaskSlice& ref, const MaskSlice& test);
double surface_dice(const MaskSlice& ref, const MaskSlice& test,
                    double tolerance_mm = kDefaultSurfaceToleranceMm);
double hd95(const MaskSlice& ref, const MaskSlice& test);

// All three metrics, sharing one boundary extraction.
GeomMetrics compute_metrics(const MaskSlice& ref, const MaskSlice& test,
                            double tolerance_mm = kDefaultSurfaceToleranceMm);

// Nearest-rank 95th percentile of an unsorted sample (copied and sorted).
double percentile95_nearest_rank(std::vector<double> values);

enum class Aggregation { max_rule, min_rule };

struct SurrogateThresholds {
    double dsc_hi = 0.9;
    double dsc_lo = 0.7;
    double sdsc_hi = 0.9;
    double sdsc_lo = 0.7;
    double hd95_good_mm = 2.5;
    double hd95_major_mm = 6.0;
    Aggregation aggregation = Aggregation::max_rule;

    // Throws ConfigError when the ordering constraints are violated.
    void validate() const;
};

struct PerMetricClasses {
    int dsc = 0;
    int sdsc = 0;
    int hd95 = 0;
};

PerMetricClasses per_metric_classes(const GeomMetrics& m, const SurrogateThresholds& thr);
int surrogate_label(const GeomMetrics& m, const SurrogateThresholds& thr = {});

}  // namespace cqa::geom
