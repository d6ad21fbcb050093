#pragma once

// 8-bit PNG read/write through libpng's simplified API.

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdnet/errors.hpp"

namespace rdnet::io {

struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

namespace detail {
inline Image8 read_png(const std::filesystem::path& path, std::uint32_t format, std::size_t channels) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
    img.format = format;
    Image8 out;
    out.width = img.width;
    out.height = img.height;
    out.channels = channels;
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    return out;
}
}  // namespace detail

/// Any PNG, converted to 8-bit grayscale.
inline Image8 read_gray(const std::filesystem::path& path) { return detail::read_png(path, PNG_FORMAT_GRAY, 1); }

/// Any PNG, converted to 8-bit RGB.
inline Image8 read_rgb(const std::filesystem::path& path) { return detail::read_png(path, PNG_FORMAT_RGB, 3); }

inline void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) throw ArgumentError("write_png: channels must be 1 or 3");
    if (image.pixels.size() != image.width * image.height * image.channels)
        throw ArgumentError("write_png: pixel buffer size does not match dimensions");
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
}

}  // namespace rdnet::io
