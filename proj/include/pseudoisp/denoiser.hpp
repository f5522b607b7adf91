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

// The two built-in denoisers: a fixed Gaussian blur and a compact residual CNN.

#include <filesystem>

#include "pseudoisp/image.hpp"
#include "pseudoisp/nn.hpp"

namespace pseudoisp {

enum class DenoiserKind { gaussian_blur, compact_cnn };

inline std::string to_string(DenoiserKind k) { return k == DenoiserKind::gaussian_blur ? "gaussian_blur" : "compact_cnn"; }

inline DenoiserKind denoiser_kind_from_string(const std::string& s) {
    if (s == "gaussian_blur") return DenoiserKind::gaussian_blur;
    if (s == "compact_cnn") return DenoiserKind::compact_cnn;
    throw std::invalid_argument("unknown denoiser kind '" + s + "'");
}

/// Normalised 1-D Gaussian taps; sums to 1.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian_kernel: size must be odd and positive");
    if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    std::vector<double> k(size);
    const int r = size / 2;
    double s = 0;
    for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= s;
    return k;
}

/// Separable Gaussian blur with reflect-101 borders.
inline Image gaussian_blur(const Image& img, int size = 5, double sigma = 1.0) {
    const auto k = gaussian_kernel(size, sigma);
    const int r = size / 2;
    Image tmp(img.channels, img.height, img.width), out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double s = 0;
                for (int i = -r; i <= r; ++i) s += k[i + r] * img.at(c, y, reflect101(x + i, img.width));
                tmp.at(c, y, x) = static_cast<float>(s);
            }
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double s = 0;
                for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(c, reflect101(y + i, img.height), x);
                out.at(c, y, x) = static_cast<float>(s);
            }
    }
    return out;
}

struct CompactCnnArch {
    int width = 64;
    int depth = 7;                  // 3x3 conv layers
    bool zero_init_output = true;   // start as the identity denoiser
};

/// Either a fixed 5x5 Gaussian blur (sigma 1) or a residual CNN predicting the
/// noise: output = clip(x - net(x)).
class Denoiser {
public:
    DenoiserKind kind = DenoiserKind::gaussian_blur;
    int blur_size = 5;
    double blur_sigma = 1.0;
    ConvStack<float> net;  // compact_cnn only

    static Denoiser gaussian() { return Denoiser{}; }

    static Denoiser compact_cnn(const CompactCnnArch& arch, std::uint64_t seed) {
        if (arch.depth < 2 || arch.width < 1) throw std::invalid_argument("compact_cnn: depth >= 2 and width >= 1 required");
        Rng rng(seed);
        Denoiser d;
        d.kind = DenoiserKind::compact_cnn;
        d.net = ConvStack<float>(stack_channels(3, arch.width, 3, arch.depth), 3, 1, Activation::relu,
                                 Activation::none, rng);
        if (arch.zero_init_output) d.net.zero_output_layer();
        return d;
    }

    bool trainable() const { return kind == DenoiserKind::compact_cnn; }

    /// Unclipped differentiable output for training; compact_cnn only.
    Tensor<float> forward(const Tensor<float>& noisy) const {
        if (!trainable()) throw std::logic_error("denoiser: gaussian_blur has no trainable forward");
        return sub(noisy, net.forward(noisy));
    }

    Image denoise(const Image& noisy) const {
        if (kind == DenoiserKind::gaussian_blur) return gaussian_blur(noisy, blur_size, blur_sigma);
        NoGradGuard no_grad;
        return clip01(image_from_tensor(forward(to_tensor<float>(noisy))));
    }

    Denoiser clone() const {
        Denoiser d = *this;
        if (trainable()) d.net = net.clone();
        return d;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ckpt;
        ckpt.metadata["kind"] = to_string(kind);
        ckpt.metadata["blur_size"] = blur_size;
        ckpt.metadata["blur_sigma"] = blur_sigma;
        if (trainable()) net.save(ckpt, "denoiser");
        return ckpt;
    }

    static Denoiser from_checkpoint(const Checkpoint& ckpt) {
        Denoiser d;
        d.kind = denoiser_kind_from_string(ckpt.metadata.at("kind").get<std::string>());
        d.blur_size = ckpt.metadata.value("blur_size", 5);
        d.blur_sigma = ckpt.metadata.value("blur_sigma", 1.0);
        if (d.trainable()) d.net = ConvStack<float>::load(ckpt, "denoiser");
        return d;
    }

    void save(const std::filesystem::path& path) const { to_checkpoint().save(path); }
    static Denoiser load(const std::filesystem::path& path) { return from_checkpoint(Checkpoint::load(path)); }
};

}  // namespace pseudoisp
