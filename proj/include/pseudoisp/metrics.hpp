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

#include <array>
#include <cmath>
#include <span>

#include "pseudoisp/image.hpp"

namespace pseudoisp {

inline constexpr double kPsnrCapDb = 100.0;

/// PSNR in dB for signals with peak 1; identical inputs are capped at 100 dB.
inline double psnr(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size() || a.empty())
        throw ShapeError("psnr: size mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    return psnr(std::span<const float>(a.data), std::span<const float>(b.data));
}

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

namespace detail {

// Separable Gaussian filtering with "valid" support.
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                        const std::vector<double>& kernel) {
    const int k = static_cast<int>(kernel.size());
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += kernel[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += kernel[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace detail

/// Gaussian-window SSIM averaged over valid window positions and channels.
inline double ssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
    if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    if (a.height < opt.window || a.width < opt.window)
        throw ShapeError("ssim: images must be at least " + std::to_string(opt.window) + " pixels per side, got " +
                         shape_string(a));
    std::vector<double> kernel(opt.window);
    const int r = opt.window / 2;
    double norm = 0.0;
    for (int i = 0; i < opt.window; ++i) {
        kernel[i] = std::exp(-0.5 * (i - r) * (i - r) / (opt.sigma * opt.sigma));
        norm += kernel[i];
    }
    for (auto& v : kernel) v /= norm;
    const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
    const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
    const int h = a.height, w = a.width;
    const std::size_t n = a.plane();
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.data[c * n + i];
            y[i] = b.data[c * n + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::filter_valid(x, h, w, kernel);
        const auto my = detail::filter_valid(y, h, w, kernel);
        const auto sxx = detail::filter_valid(xx, h, w, kernel);
        const auto syy = detail::filter_valid(yy, h, w, kernel);
        const auto sxy = detail::filter_valid(xy, h, w, kernel);
        double acc = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cxy = sxy[i] - mx[i] * my[i];
            acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / a.channels;
}

}  // namespace pseudoisp
