#include "cqa/features.hpp"

#include <algorithm>
#include <cmath>

namespace cqa::features {

geom::MaskSlice estimate_region(const Image& image, const geom::Spacing& spacing, double threshold) {
    geom::MaskSlice out(image.rows, image.cols, spacing);
    for (int r = 0; r < image.rows; ++r) {
        for (int c = 0; c < image.cols; ++c) {
            double sum = 0.0;
            int count = 0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= image.rows || cc >= image.cols) continue;
                    sum += image.at(rr, cc);
                    ++count;
                }
            }
            out.set(r, c, sum / count > threshold);
        }
    }
    return out;
}

namespace {

bool centroid(const geom::MaskSlice& m, double& y, double& x) {
    double sy = 0.0, sx = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (!m.at(r, c)) continue;
            sy += r * m.spacing().row_mm;
            sx += c * m.spacing().col_mm;
            ++n;
        }
    }
    if (n == 0) return false;
    y = sy / static_cast<double>(n);
    x = sx / static_cast<double>(n);
    return true;
}

}  // namespace

std::vector<double> metric_features(const Image& image, const geom::MaskSlice& auto_mask,
                                    double sdsc_tolerance_mm) {
    if (image.rows != auto_mask.rows() || image.cols != auto_mask.cols())
        throw DimensionError("image and auto mask shapes differ");
    const auto region = estimate_region(image, auto_mask.spacing());
    const auto m = geom::compute_metrics(region, auto_mask, sdsc_tolerance_mm);

    const auto& s = auto_mask.spacing();
    const double pixel_area = s.row_mm * s.col_mm;
    const double area = static_cast<double>(auto_mask.area_px()) * pixel_area;
    const double perimeter =
        static_cast<double>(geom::boundary_pixels(auto_mask).size()) * 0.5 * (s.row_mm + s.col_mm);

    double offset = 30.0;
    double ay = 0, ax = 0, ry = 0, rx = 0;
    if (centroid(auto_mask, ay, ax) && centroid(region, ry, rx)) offset = std::hypot(ay - ry, ax - rx);

    return {m.dsc,
            m.sdsc,
            std::min(m.hd95_mm, 30.0) / 10.0,
            area / 1000.0,
            perimeter / 100.0,
            std::min(offset, 30.0) / 10.0};
}

std::vector<double> grid_input(const Image& image, const geom::MaskSlice& auto_mask) {
    if (image.rows != auto_mask.rows() || image.cols != auto_mask.cols())
        throw DimensionError("image and auto mask shapes differ");
    std::vector<double> x(image.values);
    x.reserve(2 * image.values.size());
    for (auto v : auto_mask.data()) x.push_back(v != 0 ? 1.0 : 0.0);
    return x;
}

}  // namespace cqa::features
