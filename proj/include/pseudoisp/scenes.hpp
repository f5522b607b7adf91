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

// Procedural clean scenes so that datasets can be produced without downloads.

#include <numbers>
#include <string>

#include "pseudoisp/image.hpp"
#include "pseudoisp/random.hpp"

namespace pseudoisp {

enum class SceneKind { gradient, checker, blobs, texture, composite };

inline SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "gradient") return SceneKind::gradient;
    if (s == "checker") return SceneKind::checker;
    if (s == "blobs") return SceneKind::blobs;
    if (s == "texture") return SceneKind::texture;
    if (s == "composite") return SceneKind::composite;
    throw std::invalid_argument("unknown scene kind '" + s + "'");
}

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3 - 2 * t);
}

// Sum of a few random low-frequency cosines, roughly in [-1, 1].
inline std::vector<double> smooth_field(int h, int w, int terms, double max_freq, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> f(static_cast<std::size_t>(h) * w, 0.0);
    for (int t = 0; t < terms; ++t) {
        const double fx = (u(rng) * 2 - 1) * max_freq, fy = (u(rng) * 2 - 1) * max_freq;
        const double phase = u(rng) * 2 * std::numbers::pi;
        const double amp = 1.0 / terms;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                f[static_cast<std::size_t>(y) * w + x] +=
                    amp * std::cos(2 * std::numbers::pi * (fx * x / w + fy * y / h) + phase);
    }
    return f;
}

inline std::array<double, 3> random_color(Rng& rng, double lo = 0.08, double hi = 0.92) {
    std::uniform_real_distribution<double> u(lo, hi);
    return {u(rng), u(rng), u(rng)};
}

}  // namespace detail

/// A clean sRGB scene with values in [0.02, 0.98].
inline Image make_scene(SceneKind kind, int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(3, height, width);
    auto put = [&](int y, int x, const std::array<double, 3>& c) {
        for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = static_cast<float>(std::clamp(c[ch], 0.02, 0.98));
    };
    auto c0 = detail::random_color(rng), c1 = detail::random_color(rng);
    const double angle = u(rng) * 2 * std::numbers::pi;
    const double dx = std::cos(angle), dy = std::sin(angle);
    auto ramp = [&](int y, int x) {
        const double t = 0.5 + 0.5 * (dx * (x - width / 2.0) / width + dy * (y - height / 2.0) / height) * 1.4;
        return std::clamp(t, 0.0, 1.0);
    };

    switch (kind) {
        case SceneKind::gradient: {
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double t = ramp(y, x);
                    put(y, x, {c0[0] + (c1[0] - c0[0]) * t, c0[1] + (c1[1] - c0[1]) * t, c0[2] + (c1[2] - c0[2]) * t});
                }
            break;
        }
        case SceneKind::checker: {
            const double cell = 6 + u(rng) * 10;
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double sx = std::sin(std::numbers::pi * x / cell), sy = std::sin(std::numbers::pi * y / cell);
                    const double t = detail::smoothstep(-0.15, 0.15, sx * sy);
                    put(y, x, {c0[0] + (c1[0] - c0[0]) * t, c0[1] + (c1[1] - c0[1]) * t, c0[2] + (c1[2] - c0[2]) * t});
                }
            break;
        }
        case SceneKind::blobs:
        case SceneKind::texture:
        case SceneKind::composite: {
            const auto field = detail::smooth_field(height, width, 6, kind == SceneKind::texture ? 8.0 : 3.0, rng);
            std::array<std::vector<double>, 3> base;
            for (int ch = 0; ch < 3; ++ch) base[ch].resize(img.plane());
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double t = ramp(y, x);
                    const double f = field[static_cast<std::size_t>(y) * width + x];
                    for (int ch = 0; ch < 3; ++ch)
                        base[ch][static_cast<std::size_t>(y) * width + x] =
                            c0[ch] + (c1[ch] - c0[ch]) * t + (kind == SceneKind::texture ? 0.35 : 0.12) * f;
                }
            const int shapes = kind == SceneKind::texture ? 0 : 3 + static_cast<int>(u(rng) * 4);
            for (int s = 0; s < shapes; ++s) {
                const auto col = detail::random_color(rng);
                const double cx = u(rng) * width, cy = u(rng) * height;
                const double radius = (0.08 + 0.22 * u(rng)) * std::min(width, height);
                const bool disk = kind == SceneKind::blobs || u(rng) < 0.5;
                const double soft = kind == SceneKind::blobs ? radius * 0.6 : 1.2;
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x) {
                        double d;
                        if (disk) {
                            d = std::hypot(x - cx, y - cy) - radius;
                        } else {
                            d = std::max(std::abs(x - cx), std::abs(y - cy)) - radius;
                        }
                        const double alpha = 1.0 - detail::smoothstep(-soft, soft, d);
                        if (alpha <= 0) continue;
                        for (int ch = 0; ch < 3; ++ch) {
                            auto& v = base[ch][static_cast<std::size_t>(y) * width + x];
                            v = v * (1 - alpha) + col[ch] * alpha;
                        }
                    }
            }
            if (kind == SceneKind::composite) {
                const auto fine = detail::smooth_field(height, width, 10, 12.0, rng);
                for (int ch = 0; ch < 3; ++ch)
                    for (std::size_t i = 0; i < img.plane(); ++i) base[ch][i] += 0.04 * fine[i];
            }
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    put(y, x, {base[0][i], base[1][i], base[2][i]});
                }
            break;
        }
    }
    return img;
}

/// Very low-frequency scene used for checking the simulator's self-inverse.
inline Image make_smooth_scene(int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(3, height, width);
    for (int ch = 0; ch < 3; ++ch) {
        const double base = 0.35 + 0.3 * u(rng), amp = 0.15 * u(rng);
        const double phase = u(rng) * 6.28, fx = 0.5 + u(rng), fy = 0.5 + u(rng);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                img.at(ch, y, x) = static_cast<float>(
                    base + amp * std::sin(std::numbers::pi * (fx * x / width + fy * y / height) + phase));
    }
    return img;
}

/// A deterministic mix of scene kinds, mostly composites.
inline std::vector<Image> make_scene_set(int count, int height, int width, std::uint64_t seed) {
    static constexpr SceneKind cycle[] = {SceneKind::composite, SceneKind::composite, SceneKind::blobs,
                                          SceneKind::composite, SceneKind::texture, SceneKind::checker,
                                          SceneKind::composite, SceneKind::gradient};
    std::vector<Image> out;
    for (int i = 0; i < count; ++i)
        out.push_back(make_scene(cycle[i % std::size(cycle)], height, width, derive_seed(seed, {std::uint64_t(i)})));
    return out;
}

}  // namespace pseudoisp
