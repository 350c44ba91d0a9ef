#include "cqa/service/png_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "cqa/errors.hpp"

namespace cqa::service {

namespace {

void on_png_error(png_structp, png_const_charp msg) { throw FormatError(std::string("PNG: ") + msg); }
void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
    const std::vector<std::uint8_t>* bytes;
    std::size_t pos;
};

}  // namespace

std::vector<std::uint8_t> encode_png(const GrayPixels& px) {
    if (px.rows < 1 || px.cols < 1 || px.data.size() != static_cast<std::size_t>(px.rows) * px.cols)
        throw DimensionError("PNG pixel buffer does not match its dimensions");
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    if (!png) throw FormatError("PNG: cannot create writer");
    png_infop info = png_create_info_struct(png);
    try {
        png_set_write_fn(
            png, &out,
            [](png_structp p, png_bytep data, png_size_t len) {
                auto* o = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
                o->insert(o->end(), data, data + len);
            },
            [](png_structp) {});
        png_set_IHDR(png, info, static_cast<png_uint_32>(px.cols), static_cast<png_uint_32>(px.rows), 8,
                     PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int r = 0; r < px.rows; ++r) {
            png_write_row(png, const_cast<png_bytep>(px.data.data() + static_cast<std::size_t>(r) * px.cols));
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

GrayPixels decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    if (!png) throw FormatError("PNG: cannot create reader");
    png_infop info = png_create_info_struct(png);
    GrayPixels px;
    ReadCursor cursor{&bytes, 0};
    try {
        png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t len) {
            auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
            if (c->pos + len > c->bytes->size()) png_error(p, "truncated data");
            std::memcpy(data, c->bytes->data() + c->pos, len);
            c->pos += len;
        });
        png_read_info(png, info);
        const auto color = png_get_color_type(png, info);
        const auto depth = png_get_bit_depth(png, info);
        if (depth == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        png_read_update_info(png, info);
        px.cols = static_cast<int>(png_get_image_width(png, info));
        px.rows = static_cast<int>(png_get_image_height(png, info));
        if (png_get_rowbytes(png, info) != static_cast<std::size_t>(px.cols))
            throw FormatError("PNG: unsupported pixel layout");
        px.data.resize(static_cast<std::size_t>(px.rows) * px.cols);
        for (int r = 0; r < px.rows; ++r) png_read_row(png, px.data.data() + static_cast<std::size_t>(r) * px.cols, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return px;
}

void write_png(const std::filesystem::path& path, const GrayPixels& px) {
    const auto bytes = encode_png(px);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayPixels read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace cqa::service
