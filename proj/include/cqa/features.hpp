#pragma once
// Network inputs derived from a (pseudo-CT image, auto-contour) pair. No
// reference contour is used: the overlap features compare the auto-contour with
// a region estimated from image intensities.

#include <vector>

#include "cqa/geometry.hpp"
#include "cqa/image.hpp"

namespace cqa::features {

inline constexpr int kMetricFeatureCount = 6;

// 3x3 box filter followed by a fixed intensity threshold.
geom::MaskSlice estimate_region(const Image& image, const geom::Spacing& spacing,
                                double threshold = 0.5);

// [dsc, sdsc, hd95/10 (capped at 3), area/1000 mm^2, perimeter/100 mm,
//  centroid offset/10 mm (capped at 3)], each against the estimated region.
std::vector<double> metric_features(const Image& image, const geom::MaskSlice& auto_mask,
                                    double sdsc_tolerance_mm = geom::kDefaultSurfaceToleranceMm);

// Two channels, row-major: image intensities then the binary auto-contour.
std::vector<double> grid_input(const Image& image, const geom::MaskSlice& auto_mask);

}  // namespace cqa::features
