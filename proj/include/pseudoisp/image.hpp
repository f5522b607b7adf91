// Copyright (c) 2026 The Pseudo-ISP Project Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pseudoisp/tensor.hpp"

namespace pseudoisp {

/// Planar float image (channel-major), nominally in [0, 1].
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    float at(int c, int y, int x) const {
        return data[c * plane() + static_cast<std::size_t>(y) * width + x];
    }

    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool operator==(const Image&) const = default;
};

inline std::string shape_string(const Image& img) {
    return std::to_string(img.channels) + "x" + std::to_string(img.height) + "x" + std::to_string(img.width);
}

inline Image clip01(Image img) {
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

/// Crop rows [top, top+h) and columns [left, left+w).
inline Image crop(const Image& img, int top, int left, int h, int w) {
    if (top < 0 || left < 0 || top + h > img.height || left + w > img.width)
        throw ShapeError("image crop outside bounds");
    Image out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
    return out;
}

/// Mirror index without repeating the edge sample (…2 1 | 0 1 2 … n-1 | n-2 …).
inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

/// Crop that reflects at the borders when the window leaves the image.
inline Image crop_reflect(const Image& img, int top, int left, int h, int w) {
    Image out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = img.at(c, reflect101(top + y, img.height), reflect101(left + x, img.width));
    return out;
}

/// Stacks equally sized images into an [N,C,H,W] tensor.
template <typename T>
Tensor<T> to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw ShapeError("to_tensor: no images");
    const Image& first = *images[0];
    std::vector<T> values;
    values.reserve(first.size() * images.size());
    for (const Image* img : images) {
        if (!img->same_shape(first))
            throw ShapeError("to_tensor: mixed image shapes " + shape_string(first) + " and " + shape_string(*img));
        values.insert(values.end(), img->data.begin(), img->data.end());
    }
    return Tensor<T>({static_cast<int>(images.size()), first.channels, first.height, first.width},
                     std::move(values));
}

template <typename T>
Tensor<T> to_tensor(const Image& image) {
    return to_tensor<T>(std::vector<const Image*>{&image});
}

template <typename T>
Image image_from_tensor(const Tensor<T>& t, int index = 0) {
    if (t.rank() != 4) throw ShapeError("image_from_tensor: expected NCHW, got " + to_string(t.shape()));
    Image img(t.dim(1), t.dim(2), t.dim(3));
    const auto src = t.data().subspan(static_cast<std::size_t>(index) * img.size(), img.size());
    std::transform(src.begin(), src.end(), img.data.begin(), [](T v) { return static_cast<float>(v); });
    return img;
}

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace detail

/// Writes a 1- or 3-channel image as an 8- or 16-bit PNG, clamping to [0, 1].
inline void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 16) {
    if (img.channels != 1 && img.channels != 3)
        throw ImageIoError("write_png " + path.string() + ": unsupported channel count " +
                           std::to_string(img.channels));
    if (bit_depth != 8 && bit_depth != 16)
        throw ImageIoError("write_png " + path.string() + ": bit depth must be 8 or 16");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw ImageIoError("write_png: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("write_png: libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("write_png: libpng error while writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, bit_depth,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int bytes = bit_depth / 8;
    const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels * bytes);
    for (int y = 0; y < img.height; ++y) {
        std::size_t o = 0;
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(static_cast<double>(img.at(c, y, x)), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::lround(v * maxv));
                if (bytes == 2) row[o++] = static_cast<png_byte>(q >> 8);
                row[o++] = static_cast<png_byte>(q & 0xff);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads an 8- or 16-bit PNG into [0, 1] floats; grey becomes 3 identical channels
/// unless keep_gray is set, alpha is dropped.
inline Image read_png(const std::filesystem::path& path, bool keep_gray = false) {
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw ImageIoError("read_png: cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw ImageIoError("read_png: " + path.string() + " is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("read_png: libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("read_png: libpng error while reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const bool gray = !(color & PNG_COLOR_MASK_COLOR) && color != PNG_COLOR_TYPE_PALETTE;
    if (gray && !keep_gray) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int bytes = depth == 16 ? 2 : 1;
    const double maxv = depth == 16 ? 65535.0 : 255.0;
    std::vector<png_byte> buffer(static_cast<std::size_t>(h) * png_get_rowbytes(png, info));
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * png_get_rowbytes(png, info);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(channels, h, w);
    for (int y = 0; y < h; ++y) {
        const png_byte* r = rows[y];
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t o = (static_cast<std::size_t>(x) * channels + c) * bytes;
                const unsigned q = bytes == 2 ? (unsigned(r[o]) << 8) | r[o + 1] : r[o];
                img.at(c, y, x) = static_cast<float>(q / maxv);
            }
    }
    return img;
}

}  // namespace pseudoisp
