/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/io/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace pat::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

} // namespace

void save_png(const nn::Tensor<float>& image, const std::string& path) {
    if (image.depth != 1 && image.depth != 3)
        throw std::invalid_argument("save_png: image depth must be 1 or 3");
    if (image.height < 1 || image.width < 1)
        throw std::invalid_argument("save_png: empty image");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail("save_png: cannot open", path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("save_png: png_create_write_struct failed", path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("save_png: png_create_info_struct failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("save_png: libpng error", path);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(image.width), png_uint_32(image.height), 8,
                 image.depth == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> rowBuf(std::size_t(image.width) * std::size_t(image.depth));
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.depth; ++c) {
                const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
                rowBuf[std::size_t(x) * std::size_t(image.depth) + std::size_t(c)] =
                    png_byte(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, rowBuf.data());
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

nn::Tensor<float> load_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail("load_png: cannot open", path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("load_png: png_create_read_struct failed", path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("load_png: png_create_info_struct failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_png: libpng error", path);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int colorType = png_get_color_type(png, info);
    const int bitDepth = png_get_bit_depth(png, info);

    // Normalize every input to 8-bit gray or RGB.
    if (colorType == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (colorType == PNG_COLOR_TYPE_GRAY && bitDepth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (bitDepth == 16) png_set_strip_16(png);
    if (colorType & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = int(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("load_png: unsupported channel count", path);
    }

    nn::Tensor<float> image(int(height), int(width), channels);
    std::vector<png_byte> rowBuf(std::size_t(width) * std::size_t(channels));
    for (png_uint_32 y = 0; y < height; ++y) {
        png_read_row(png, rowBuf.data(), nullptr);
        for (png_uint_32 x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                image.at(int(y), int(x), c) =
                    float(rowBuf[std::size_t(x) * std::size_t(channels) + std::size_t(c)]) /
                    255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

namespace {

constexpr char kFloatMagic[8] = {'P', 'A', 'T', 'I', 'M', 'G', '1', '\0'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    buf.push_back((unsigned char)(v & 0xff));
    buf.push_back((unsigned char)((v >> 8) & 0xff));
    buf.push_back((unsigned char)((v >> 16) & 0xff));
    buf.push_back((unsigned char)((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

} // namespace

void save_float_image(const nn::Tensor<float>& image, const std::string& path) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kFloatMagic, kFloatMagic + 8);
    put_u32(buf, std::uint32_t(image.height));
    put_u32(buf, std::uint32_t(image.width));
    put_u32(buf, std::uint32_t(image.depth));
    const std::size_t count = image.values.size();
    buf.reserve(buf.size() + count * 4);
    for (float v : image.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(buf, bits);
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail("save_float_image: cannot open", path);
    if (std::fwrite(buf.data(), 1, buf.size(), file.get()) != buf.size())
        fail("save_float_image: short write", path);
}

nn::Tensor<float> load_float_image(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail("load_float_image: cannot open", path);
    std::fseek(file.get(), 0, SEEK_END);
    const long size = std::ftell(file.get());
    std::fseek(file.get(), 0, SEEK_SET);
    if (size < 20) fail("load_float_image: truncated file", path);
    std::vector<unsigned char> buf(static_cast<std::size_t>(size));
    if (std::fread(buf.data(), 1, buf.size(), file.get()) != buf.size())
        fail("load_float_image: short read", path);
    if (std::memcmp(buf.data(), kFloatMagic, 8) != 0)
        fail("load_float_image: bad magic", path);
    const std::uint32_t h = get_u32(buf.data() + 8);
    const std::uint32_t w = get_u32(buf.data() + 12);
    const std::uint32_t d = get_u32(buf.data() + 16);
    if (h == 0 || w == 0 || d == 0 || h > (1u << 20) || w > (1u << 20) || d > 64)
        fail("load_float_image: bad dimensions", path);
    const std::size_t count = std::size_t(h) * w * d;
    if (buf.size() != 20 + count * 4) fail("load_float_image: size mismatch", path);
    nn::Tensor<float> image{int(h), int(w), int(d)};
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(buf.data() + 20 + i * 4);
        std::memcpy(&image.values[i], &bits, 4);
    }
    return image;
}

} // namespace pat::io
