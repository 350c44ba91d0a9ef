#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cqa::service {

struct GrayPixels {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> data;  // row-major
};

// 8-bit grayscale PNG. Written without timestamps so output is reproducible.
std::vector<std::uint8_t> encode_png(const GrayPixels& px);
GrayPixels decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const GrayPixels& px);
GrayPixels read_png(const std::filesystem::path& path);

}  // namespace cqa::service
