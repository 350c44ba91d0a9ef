#pragma once

#include <vector>

#include "cqa/errors.hpp"

namespace cqa {

// Row-major grayscale image with intensities nominally in [0, 1].
struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Image() = default;
    Image(int r, int c, double fill = 0.0)
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
        if (r < 1 || c < 1) throw DimensionError("image grid must be at least 1x1");
    }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    bool operator==(const Image&) const = default;
};

}  // namespace cqa
