#include "ndpnn/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "ndpnn/errors.hpp"

namespace ndpnn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Tensor<float> read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw format_error("png: cannot open: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw format_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw format_error("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("png: failed to decode " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const png_uint_32 height = png_get_image_height(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("png: unsupported channel count after conversion");
    }

    std::vector<unsigned char> raster(static_cast<std::size_t>(height) * width * channels);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = raster.data() + static_cast<std::size_t>(y) * width * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor<float> out({static_cast<std::size_t>(channels), height, width});
    for (png_uint_32 y = 0; y < height; ++y)
        for (png_uint_32 x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                out(c, y, x) =
                    static_cast<float>(raster[(static_cast<std::size_t>(y) * width + x) * channels +
                                              static_cast<std::size_t>(c)]) /
                    255.0f;
    return out;
}

void write_png(const Tensor<float>& image, const std::filesystem::path& path) {
    if (image.rank() != 3) throw shape_error("png: image must be (C, H, W)");
    const int channels = static_cast<int>(image.extent(0));
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("png: only 1 or 3 channels supported");
    const auto height = static_cast<png_uint_32>(image.extent(1));
    const auto width = static_cast<png_uint_32>(image.extent(2));

    std::vector<unsigned char> raster(static_cast<std::size_t>(height) * width * channels);
    for (png_uint_32 y = 0; y < height; ++y)
        for (png_uint_32 x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                const float v = image(c, y, x);
                const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                raster[(static_cast<std::size_t>(y) * width + x) * channels +
                       static_cast<std::size_t>(c)] =
                    static_cast<unsigned char>(std::lround(clamped * 255.0f));
            }

    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw format_error("png: cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw format_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw format_error("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw format_error("png: failed to encode " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = raster.data() + static_cast<std::size_t>(y) * width * channels;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace ndpnn
