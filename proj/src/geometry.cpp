#include "cqa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cqa/errors.hpp"

namespace cqa::geom {

MaskSlice::MaskSlice(int rows, int cols, Spacing spacing, std::string subject_id, int slice_index)
    : rows_(rows), cols_(cols), spacing_(spacing), subject_id_(std::move(subject_id)),
      slice_index_(slice_index) {
    if (rows < 1 || cols < 1) throw DimensionError("mask grid must be at least 1x1");
    if (!(spacing.row_mm > 0.0) || !(spacing.col_mm > 0.0))
        throw DomainError("pixel spacing must be positive");
    if (slice_index < 0) throw DomainError("slice index must be non-negative");
    pixels_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
}

std::size_t MaskSlice::area_px() const {
    return static_cast<std::size_t>(std::count_if(pixels_.begin(), pixels_.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

double pixel_distance(PixelIndex a, PixelIndex b, const Spacing& s) {
    const double dy = static_cast<double>(a.row - b.row) * s.row_mm;
    const double dx = static_cast<double>(a.col - b.col) * s.col_mm;
    return std::sqrt(dy * dy + dx * dx);
}

std::vector<PixelIndex> boundary_pixels(const MaskSlice& mask) {
    std::vector<PixelIndex> out;
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (!mask.at(r, c)) continue;
            if (!mask.inside(r - 1, c) || !mask.inside(r + 1, c) || !mask.inside(r, c - 1) ||
                !mask.inside(r, c + 1)) {
                out.push_back({r, c});
            }
        }
    }
    return out;
}

std::vector<PointMm> boundary_points(const MaskSlice& mask) {
    const auto px = boundary_pixels(mask);
    std::vector<PointMm> out;
    out.reserve(px.size());
    for (const auto& p : px) {
        out.push_back({p.row * mask.spacing().row_mm, p.col * mask.spacing().col_mm});
    }
    return out;
}

std::vector<double> directed_distances(const std::vector<PixelIndex>& from,
                                       const std::vector<PixelIndex>& to, const Spacing& s) {
    if (to.empty()) throw DegenerateInputError("directed distance to an empty point set");

    // Bucket the target set by row, columns sorted, so each query only visits
    // rows whose vertical offset alone cannot exceed the best distance so far.
    int min_row = to.front().row, max_row = to.front().row;
    for (const auto& p : to) {
        min_row = std::min(min_row, p.row);
        max_row = std::max(max_row, p.row);
    }
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(max_row - min_row + 1));
    for (const auto& p : to) rows[static_cast<std::size_t>(p.row - min_row)].push_back(p.col);
    for (auto& r : rows) std::sort(r.begin(), r.end());

    auto row_best = [&](int qr, int qc, int r, double& best_sq) {
        if (r < min_row || r > max_row) return;
        const auto& cols = rows[static_cast<std::size_t>(r - min_row)];
        if (cols.empty()) return;
        const double dy = static_cast<double>(qr - r) * s.row_mm;
        auto it = std::lower_bound(cols.begin(), cols.end(), qc);
        auto consider = [&](int c) {
            const double dx = static_cast<double>(qc - c) * s.col_mm;
            best_sq = std::min(best_sq, dy * dy + dx * dx);
        };
        if (it != cols.end()) consider(*it);
        if (it != cols.begin()) consider(*std::prev(it));
    };

    std::vector<double> out;
    out.reserve(from.size());
    for (const auto& q : from) {
        double best_sq = std::numeric_limits<double>::infinity();
        const int reach = std::max(std::abs(q.row - min_row), std::abs(q.row - max_row));
        for (int k = 0; k <= reach; ++k) {
            const double dy = static_cast<double>(k) * s.row_mm;
            if (dy * dy > best_sq) break;
            row_best(q.row, q.col, q.row - k, best_sq);
            if (k != 0) row_best(q.row, q.col, q.row + k, best_sq);
        }
        out.push_back(std::sqrt(best_sq));
    }
    return out;
}

namespace {

void require_same_grid(const MaskSlice& a, const MaskSlice& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("mask shapes differ: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    if (!(a.spacing() == b.spacing())) throw DimensionError("mask spacings differ");
}

struct SurfaceSummary {
    double sdsc;
    double hd95;
};

SurfaceSummary surface_summary(const std::vector<PixelIndex>& ref_b,
                               const std::vector<PixelIndex>& test_b, const Spacing& s,
                               double tolerance_mm) {
    const auto d_ref = directed_distances(ref_b, test_b, s);
    const auto d_test = directed_distances(test_b, ref_b, s);
    std::size_t within = 0;
    for (double d : d_ref) within += d <= tolerance_mm ? 1 : 0;
    for (double d : d_test) within += d <= tolerance_mm ? 1 : 0;
    std::vector<double> pooled(d_ref);
    pooled.insert(pooled.end(), d_test.begin(), d_test.end());
    return {static_cast<double>(within) / static_cast<double>(pooled.size()),
            percentile95_nearest_rank(std::move(pooled))};
}

}  // namespace

double percentile95_nearest_rank(std::vector<double> values) {
    if (values.empty()) throw EmptyInputError("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    // rank = ceil(0.95 n), in integers to avoid rounding at exact multiples.
    const std::size_t n = values.size();
    const std::size_t rank = (95 * n + 99) / 100;
    return values[std::max<std::size_t>(rank, 1) - 1];
}

double dice(const MaskSlice& ref, const MaskSlice& test) {
    require_same_grid(ref, test);
    std::size_t a = 0, b = 0, both = 0;
    const auto& da = ref.data();
    const auto& db = test.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const bool in_a = da[i] != 0, in_b = db[i] != 0;
        a += in_a;
        b += in_b;
        both += in_a && in_b;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double surface_dice(const MaskSlice& ref, const MaskSlice& test, double tolerance_mm) {
    require_same_grid(ref, test);
    if (!(tolerance_mm >= 0.0)) throw DomainError("surface dice tolerance must be >= 0");
    const auto rb = boundary_pixels(ref);
    const auto tb = boundary_pixels(test);
    if (rb.empty() && tb.empty()) return 1.0;
    if (rb.empty() || tb.empty()) return 0.0;
    return surface_summary(rb, tb, ref.spacing(), tolerance_mm).sdsc;
}

double hd95(const MaskSlice& ref, const MaskSlice& test) {
    require_same_grid(ref, test);
    const auto rb = boundary_pixels(ref);
    const auto tb = boundary_pixels(test);
    if (rb.empty() && tb.empty()) return 0.0;
    if (rb.empty() || tb.empty()) return std::numeric_limits<double>::infinity();
    return surface_summary(rb, tb, ref.spacing(), 0.0).hd95;
}

GeomMetrics compute_metrics(const MaskSlice& ref, const MaskSlice& test, double tolerance_mm) {
    require_same_grid(ref, test);
    if (!(tolerance_mm >= 0.0)) throw DomainError("surface dice tolerance must be >= 0");
    GeomMetrics m;
    m.dsc = dice(ref, test);
    const auto rb = boundary_pixels(ref);
    const auto tb = boundary_pixels(test);
    if (rb.empty() || tb.empty()) {
        m.degenerate = true;
        const bool both = rb.empty() && tb.empty();
        m.sdsc = both ? 1.0 : 0.0;
        m.hd95_mm = both ? 0.0 : std::numeric_limits<double>::infinity();
        return m;
    }
    const auto summary = surface_summary(rb, tb, ref.spacing(), tolerance_mm);
    m.sdsc = summary.sdsc;
    m.hd95_mm = summary.hd95;
    return m;
}

std::vector<std::vector<PixelIndex>> trace_contours(const MaskSlice& mask) {
    // 8-connected component labels, then Moore tracing from each component's
    // first pixel (its top-left in raster order, so the west neighbour is outside).
    const int rows = mask.rows(), cols = mask.cols();
    std::vector<int> label(static_cast<std::size_t>(rows) * cols, -1);
    auto lab = [&](int r, int c) -> int& { return label[static_cast<std::size_t>(r) * cols + c]; };

    static constexpr int dr[8] = {0, -1, -1, -1, 0, 1, 1, 1};  // W, NW, N, NE, E, SE, S, SW
    static constexpr int dc[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

    std::vector<std::vector<PixelIndex>> out;
    int next_label = 0;
    for (int r0 = 0; r0 < rows; ++r0) {
        for (int c0 = 0; c0 < cols; ++c0) {
            if (!mask.at(r0, c0) || lab(r0, c0) >= 0) continue;
            std::vector<PixelIndex> stack{{r0, c0}};
            lab(r0, c0) = next_label;
            while (!stack.empty()) {
                const auto p = stack.back();
                stack.pop_back();
                for (int k = 0; k < 8; ++k) {
                    const int r = p.row + dr[k], c = p.col + dc[k];
                    if (mask.inside(r, c) && lab(r, c) < 0) {
                        lab(r, c) = next_label;
                        stack.push_back({r, c});
                    }
                }
            }
            ++next_label;

            std::vector<PixelIndex> contour{{r0, c0}};
            const PixelIndex start{r0, c0};
            PixelIndex cur = start;
            int back = 0;  // direction of the last outside neighbour; west of start is outside
            PixelIndex first_step{-1, -1};
            const std::size_t limit = 8 * static_cast<std::size_t>(rows) * cols + 8;
            for (std::size_t step = 0; step < limit; ++step) {
                int found = -1;
                for (int k = 1; k <= 8; ++k) {
                    const int d = (back + k) % 8;
                    if (mask.inside(cur.row + dr[d], cur.col + dc[d])) {
                        found = d;
                        break;
                    }
                }
                if (found < 0) break;  // isolated pixel
                const PixelIndex nxt{cur.row + dr[found], cur.col + dc[found]};
                if (cur == start) {
                    if (first_step.row < 0) {
                        first_step = nxt;
                    } else if (nxt == first_step) {
                        break;  // Jacob's stopping criterion
                    }
                }
                // The previously examined (outside) neighbour, relative to nxt.
                const int pd = (found + 7) % 8;
                const int br = cur.row + dr[pd] - nxt.row, bc = cur.col + dc[pd] - nxt.col;
                for (int k = 0; k < 8; ++k) {
                    if (dr[k] == br && dc[k] == bc) back = k;
                }
                cur = nxt;
                if (!(cur == start)) contour.push_back(cur);
            }
            out.push_back(std::move(contour));
        }
    }
    return out;
}

void SurrogateThresholds::validate() const {
    if (!(dsc_lo < dsc_hi && dsc_hi <= 1.0)) throw ConfigError("require dsc_lo < dsc_hi <= 1");
    if (!(sdsc_lo < sdsc_hi && sdsc_hi <= 1.0)) throw ConfigError("require sdsc_lo < sdsc_hi <= 1");
    if (!(0.0 < hd95_good_mm && hd95_good_mm < hd95_major_mm))
        throw ConfigError("require 0 < hd95_good_mm < hd95_major_mm");
}

PerMetricClasses per_metric_classes(const GeomMetrics& m, const SurrogateThresholds& thr) {
    auto overlap_class = [](double v, double hi, double lo) { return v >= hi ? 2 : (v >= lo ? 1 : 0); };
    PerMetricClasses c;
    c.dsc = overlap_class(m.dsc, thr.dsc_hi, thr.dsc_lo);
    c.sdsc = overlap_class(m.sdsc, thr.sdsc_hi, thr.sdsc_lo);
    c.hd95 = m.hd95_mm <= thr.hd95_good_mm ? 2 : (m.hd95_mm <= thr.hd95_major_mm ? 1 : 0);
    return c;
}

int surrogate_label(const GeomMetrics& m, const SurrogateThresholds& thr) {
    const auto c = per_metric_classes(m, thr);
    if (thr.aggregation == Aggregation::max_rule) return std::max({c.dsc, c.sdsc, c.hd95});
    return std::min({c.dsc, c.sdsc, c.hd95});
}

}  // namespace cqa::geom
