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

// Noisy-image synthesis with a trained pseudo ISP, and the simulator-backed
// checks of the two modelling assumptions behind it: (i) pseudo raw and true
// raw are related by an invertible element-wise map f, and (ii) the learned
// noise estimator approximates h(x) = f'(f^-1(x)) * g(f^-1(x)).

#include <filesystem>

#include "pseudoisp/camera_sim.hpp"
#include "pseudoisp/metrics.hpp"
#include "pseudoisp/pseudo_isp.hpp"

namespace pseudoisp {

struct SyntheticPair {
    Image clean;
    Image noisy;
    std::string model_id;
    std::uint64_t seed = 0;
};

/// I.i.d. standard normal samples.
template <typename T>
Tensor<T> standard_normal(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(normal(rng));
    return Tensor<T>(shape, std::move(v));
}

/// x + sigma * n0 in packed pseudo-raw space.
template <typename T>
Tensor<T> inject_noise(const Tensor<T>& packed, const Tensor<T>& sigma, const Tensor<T>& n0) {
    return add(packed, mul(sigma, n0));
}

/// Intermediate tensors of one synthesis call, for inspection and tests.
struct SynthesisTrace {
    Tensor<float> clean_packed;
    Tensor<float> sigma;
    Tensor<float> noise;
    Tensor<float> noisy_packed;
    Image noisy_unclipped;
};

inline void require_usable(const PseudoIspModel<float>& model) {
    if (model.iterations_trained == 0) throw std::logic_error("synthesize: model '" + model.id + "' is untrained");
    if (!model.all_finite()) throw NumericError("synthesize: model '" + model.id + "' has non-finite parameters");
}

inline SynthesisTrace synthesize_trace(const PseudoIspModel<float>& model, const Image& clean, std::uint64_t seed) {
    require_usable(model);
    if (clean.channels != 3 || clean.height % 2 || clean.width % 2)
        throw ShapeError("synthesize: clean image must be 3-channel with even dims, got " + shape_string(clean));
    NoGradGuard no_grad;
    SynthesisTrace t;
    t.clean_packed = srgb_to_packed(model, to_tensor<float>(clean));
    t.sigma = estimate_sigma(model, t.clean_packed);
    t.noise = standard_normal<float>(t.clean_packed.shape(), seed);
    t.noisy_packed = inject_noise(t.clean_packed, t.sigma, t.noise);
    t.noisy_unclipped = image_from_tensor(raw_to_srgb(model, t.noisy_packed));
    return t;
}

/// clean -> sRGB2Raw -> CFA -> pack -> add sigma_hat * n0 -> Raw2sRGB -> pixel shuffle -> clip.
inline SyntheticPair synthesize_noisy(const PseudoIspModel<float>& model, const Image& clean, std::uint64_t seed) {
    auto trace = synthesize_trace(model, clean, seed);
    return SyntheticPair{clean, clip01(std::move(trace.noisy_unclipped)), model.id, seed};
}

/// The model's noise-free reconstruction of an sRGB image, clipped to [0, 1].
inline Image clean_round_trip(const PseudoIspModel<float>& model, const Image& srgb) {
    NoGradGuard no_grad;
    return clip01(image_from_tensor(round_trip(model, to_tensor<float>(srgb))));
}

/// Packed pseudo raw (4 x H/2 x W/2) of an sRGB image.
inline Image pseudo_raw(const PseudoIspModel<float>& model, const Image& srgb) {
    NoGradGuard no_grad;
    return image_from_tensor(srgb_to_packed(model, to_tensor<float>(srgb)));
}

// ---------------------------------------------------------------------------
// Element-wise map between true raw and pseudo raw

struct ElementwiseMapOptions {
    int width = 32;   // hidden channels, multiple of 4
    int depth = 4;    // number of 1x1 layers
    int iterations = 3000;
    double learning_rate = 2e-3;
    std::uint64_t seed = 0;
};

/// Per-channel invertible scalar maps f and f^-1 on packed 4-channel images,
/// each a stack of grouped 1x1 convolutions wrapped in fixed affine
/// normalisation of its input and output.
class ElementwiseMap {
public:
    struct Affine {
        std::array<double, 4> shift{0, 0, 0, 0};
        std::array<double, 4> scale{1, 1, 1, 1};
    };

    ConvStack<float> forward_net;
    ConvStack<float> inverse_net;
    Affine gt_norm;      // normalisation of true-raw values
    Affine pseudo_norm;  // normalisation of pseudo-raw values

    /// f: true raw -> pseudo raw.
    Image apply(const Image& gt_packed) const { return run(forward_net, gt_norm, pseudo_norm, gt_packed); }
    /// f^-1: pseudo raw -> true raw.
    Image apply_inverse(const Image& pseudo_packed) const {
        return run(inverse_net, pseudo_norm, gt_norm, pseudo_packed);
    }

    /// Central-difference derivative of f for channel c at each value.
    std::vector<double> derivative(int channel, std::span<const double> values, double step = 1e-3) const {
        const int n = static_cast<int>(values.size());
        Image probe(4, 1, 2 * n);
        for (int i = 0; i < n; ++i) {
            probe.at(channel, 0, 2 * i) = static_cast<float>(values[i] + step);
            probe.at(channel, 0, 2 * i + 1) = static_cast<float>(values[i] - step);
        }
        const Image out = apply(probe);
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i)
            d[i] = (static_cast<double>(out.at(channel, 0, 2 * i)) - out.at(channel, 0, 2 * i + 1)) / (2 * step);
        return d;
    }

    static Affine fit_affine(const Image& packed) {
        Affine a;
        const std::size_t n = packed.plane();
        for (int c = 0; c < 4; ++c) {
            double s = 0, s2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = packed.data[c * n + i];
                s += v;
                s2 += v * v;
            }
            const double mean = s / n;
            // Floored so a saturated, near-constant channel cannot blow up the normalised values.
            const double sd = std::max(std::sqrt(std::max(s2 / n - mean * mean, 0.0)), 1e-3);
            a.shift[c] = mean;
            a.scale[c] = sd;
        }
        return a;
    }

    static Tensor<float> normalise(const Image& img, const Affine& a) {
        Image n = img;
        const std::size_t plane = img.plane();
        for (int c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                n.data[c * plane + i] = static_cast<float>((img.data[c * plane + i] - a.shift[c]) / a.scale[c]);
        return to_tensor<float>(n);
    }

    static Image denormalise(const Tensor<float>& t, const Affine& a) {
        Image img = image_from_tensor(t);
        const std::size_t plane = img.plane();
        for (int c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                img.data[c * plane + i] = static_cast<float>(img.data[c * plane + i] * a.scale[c] + a.shift[c]);
        return img;
    }

private:
    static Image run(const ConvStack<float>& net, const Affine& in, const Affine& out, const Image& x) {
        if (x.channels != 4) throw ShapeError("elementwise map: expected 4 packed channels, got " + shape_string(x));
        NoGradGuard no_grad;
        return denormalise(net.forward(normalise(x, in)), out);
    }
};

/// Fits f (true raw -> pseudo raw) and f^-1 on a single aligned packed patch.
inline ElementwiseMap fit_elementwise_map(const Image& gt_packed, const Image& pseudo_packed,
                                          const ElementwiseMapOptions& opt = {}) {
    if (!gt_packed.same_shape(pseudo_packed) || gt_packed.channels != 4)
        throw ShapeError("fit_elementwise_map: expected aligned 4-channel patches, got " + shape_string(gt_packed) +
                         " and " + shape_string(pseudo_packed));
    Rng rng(opt.seed);
    ElementwiseMap map;
    map.forward_net = ConvStack<float>(stack_channels(4, opt.width, 4, opt.depth), 1, 4, Activation::relu,
                                       Activation::none, rng);
    map.inverse_net = ConvStack<float>(stack_channels(4, opt.width, 4, opt.depth), 1, 4, Activation::relu,
                                       Activation::none, rng);
    map.gt_norm = ElementwiseMap::fit_affine(gt_packed);
    map.pseudo_norm = ElementwiseMap::fit_affine(pseudo_packed);
    const Tensor<float> gt = ElementwiseMap::normalise(gt_packed, map.gt_norm);
    const Tensor<float> ps = ElementwiseMap::normalise(pseudo_packed, map.pseudo_norm);

    auto fit = [&](ConvStack<float>& net, const Tensor<float>& input, const Tensor<float>& target) {
        auto params = net.parameters();
        AdamState<float> adam(params, AdamOptions{opt.learning_rate});
        for (int it = 0; it < opt.iterations; ++it) {
            // Cosine decay to a tenth of the base rate.
            const double progress = static_cast<double>(it) / std::max(1, opt.iterations - 1);
            adam.set_learning_rate(opt.learning_rate * (0.1 + 0.45 * (1 + std::cos(std::numbers::pi * progress))));
            auto loss = mse_loss(net.forward(input), target);
            if (!std::isfinite(loss.item())) throw NumericError("fit_elementwise_map: non-finite loss");
            zero_grad<float>(params);
            backward(loss);
            adam_step<float>(params, adam);
        }
    };
    fit(map.forward_net, gt, ps);
    fit(map.inverse_net, ps, gt);
    return map;
}

struct ElementwiseMapScores {
    double forward_psnr = 0;    // PSNR(f(Y_gt), Y_pseudo)
    double inverse_psnr = 0;    // PSNR(f^-1(Y_pseudo), Y_gt)
    double roundtrip_psnr = 0;  // PSNR(f^-1(f(Y_gt)), Y_gt)
};

inline ElementwiseMapScores score_elementwise_map(const ElementwiseMap& map, const Image& gt_packed,
                                                  const Image& pseudo_packed) {
    ElementwiseMapScores s;
    const Image f_gt = map.apply(gt_packed);
    s.forward_psnr = psnr(f_gt, pseudo_packed);
    s.inverse_psnr = psnr(map.apply_inverse(pseudo_packed), gt_packed);
    s.roundtrip_psnr = psnr(map.apply_inverse(f_gt), gt_packed);
    return s;
}

/// Four-panel layout Y_raw | f(Y_gt) | f^-1(Y_raw) | Y_gt, written as unpacked mosaics.
inline void write_assumption_panels(const std::filesystem::path& dir, const ElementwiseMap& map, const Image& gt_packed,
                                    const Image& pseudo_packed) {
    std::filesystem::create_directories(dir);
    auto to_mosaic = [](const Image& packed, double lo, double hi) {
        Image m(1, packed.height * 2, packed.width * 2);
        for (int i = 0; i < packed.height; ++i)
            for (int j = 0; j < packed.width; ++j)
                for (int r = 0; r < 2; ++r)
                    for (int q = 0; q < 2; ++q)
                        m.at(0, 2 * i + r, 2 * j + q) =
                            static_cast<float>((packed.at(2 * r + q, i, j) - lo) / std::max(hi - lo, 1e-9));
        return m;
    };
    auto range = [](const Image& img) {
        auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
        return std::pair<double, double>(*lo, *hi);
    };
    const auto [plo, phi] = range(pseudo_packed);
    const auto [glo, ghi] = range(gt_packed);
    write_png(dir / "y_raw.png", to_mosaic(pseudo_packed, plo, phi), 8);
    write_png(dir / "f_of_y_gt.png", to_mosaic(map.apply(gt_packed), plo, phi), 8);
    write_png(dir / "f_inv_of_y_raw.png", to_mosaic(map.apply_inverse(pseudo_packed), glo, ghi), 8);
    write_png(dir / "y_gt_raw.png", to_mosaic(gt_packed, glo, ghi), 8);
}

// ---------------------------------------------------------------------------
// Taylor noise-model verification

/// One simulated noisy image with its hidden ground truth.
struct VerificationSample {
    Image noisy_srgb;
    Image clean_srgb;
    RawImage clean_raw;
    RawImage noisy_raw;
};

inline VerificationSample verification_sample(const SimulatedImage& s) {
    return VerificationSample{s.srgb, s.clean_srgb, s.clean_raw, s.noisy_raw};
}

struct TaylorBin {
    double lo = 0, hi = 0;
    std::size_t count = 0;
    double mean_sigma_hat = 0;  // learned estimator
    double mean_h = 0;          // Taylor prediction from f and the true NLF
    double rel_error = 0;       // |mean_sigma_hat - mean_h| / mean_h
    double median_pixel_rel_error = 0;
};

struct VerificationOptions {
    double bin_lo = 0.1;
    double bin_hi = 0.9;
    int bins = 8;
    std::size_t min_count = 64;
    double derivative_step = 1e-3;
};

struct VerificationReport {
    std::vector<TaylorBin> bins;
    double max_bin_rel_error = 0;         // over populated bins
    double median_pixel_rel_error = 0;    // over all pixels in [bin_lo, bin_hi)
    double srgb_psnr = 0;                 // PSNR(f_raw2s(Y_raw), f*_raw2s(Y_gt_raw))
    ElementwiseMapScores map_scores;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["max_bin_rel_error"] = max_bin_rel_error;
        j["median_pixel_rel_error"] = median_pixel_rel_error;
        j["srgb_psnr_db"] = srgb_psnr;
        j["map"] = {{"forward_psnr_db", map_scores.forward_psnr},
                    {"inverse_psnr_db", map_scores.inverse_psnr},
                    {"roundtrip_psnr_db", map_scores.roundtrip_psnr}};
        j["bins"] = nlohmann::json::array();
        for (const auto& b : bins)
            j["bins"].push_back({{"lo", b.lo},
                                 {"hi", b.hi},
                                 {"count", b.count},
                                 {"mean_sigma_hat", b.mean_sigma_hat},
                                 {"mean_h", b.mean_h},
                                 {"rel_error", b.rel_error},
                                 {"median_pixel_rel_error", b.median_pixel_rel_error}});
        return j;
    }
};

namespace detail {
inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}
}  // namespace detail

/// Compares the learned sigma_hat(X_raw) with h(X_raw) = f'(f^-1(X_raw)) * g(f^-1(X_raw))
/// where g is the simulator's true noise standard deviation. Pixels are binned
/// by their true clean raw intensity.
inline VerificationReport verify_taylor_noise_model(const CameraProfile& profile, const ElementwiseMap& map,
                                                    const PseudoIspModel<float>& model,
                                                    const std::vector<VerificationSample>& samples,
                                                    const VerificationOptions& opt = {}) {
    VerificationReport report;
    const double width = (opt.bin_hi - opt.bin_lo) / opt.bins;
    std::vector<std::vector<double>> sig(opt.bins), hval(opt.bins), rel(opt.bins);
    std::vector<double> all_rel;
    double srgb_psnr_sum = 0;
    static constexpr int kPackedColor[4] = {0, 1, 1, 2};
    for (const auto& s : samples) {
        NoGradGuard no_grad;
        const Tensor<float> x_pack = srgb_to_packed(model, to_tensor<float>(s.clean_srgb));
        const Image x_raw = image_from_tensor(x_pack);
        const Image sigma_hat = image_from_tensor(estimate_sigma(model, x_pack));
        const Image gt_clean = pack_raw(s.clean_raw);
        const Image x_gt_est = map.apply_inverse(x_raw);
        const std::size_t plane = x_raw.plane();
        for (int c = 0; c < 4; ++c) {
            std::vector<double> u(plane);
            for (std::size_t i = 0; i < plane; ++i) u[i] = x_gt_est.data[c * plane + i];
            const auto fprime = map.derivative(c, u, opt.derivative_step);
            for (std::size_t i = 0; i < plane; ++i) {
                const double truth = gt_clean.data[c * plane + i];
                if (truth < opt.bin_lo || truth >= opt.bin_hi) continue;
                const int b = std::min(opt.bins - 1, static_cast<int>((truth - opt.bin_lo) / width));
                const double h = std::abs(fprime[i]) * profile.noise_stddev(kPackedColor[c], std::max(u[i], 0.0));
                const double sh = sigma_hat.data[c * plane + i];
                sig[b].push_back(sh);
                hval[b].push_back(h);
                const double r = std::abs(sh - h) / std::max(h, 1e-12);
                rel[b].push_back(r);
                all_rel.push_back(r);
            }
        }
        const Image y_star = image_from_tensor(round_trip(model, to_tensor<float>(s.noisy_srgb)));
        srgb_psnr_sum += psnr(clip01(y_star), develop(profile, s.noisy_raw));
    }
    for (int b = 0; b < opt.bins; ++b) {
        TaylorBin bin;
        bin.lo = opt.bin_lo + b * width;
        bin.hi = bin.lo + width;
        bin.count = sig[b].size();
        if (bin.count > 0) {
            bin.mean_sigma_hat = std::accumulate(sig[b].begin(), sig[b].end(), 0.0) / bin.count;
            bin.mean_h = std::accumulate(hval[b].begin(), hval[b].end(), 0.0) / bin.count;
            bin.rel_error = std::abs(bin.mean_sigma_hat - bin.mean_h) / std::max(bin.mean_h, 1e-12);
            bin.median_pixel_rel_error = detail::median(rel[b]);
            if (bin.count >= opt.min_count) report.max_bin_rel_error = std::max(report.max_bin_rel_error, bin.rel_error);
        }
        report.bins.push_back(bin);
    }
    report.median_pixel_rel_error = detail::median(all_rel);
    report.srgb_psnr = samples.empty() ? 0.0 : srgb_psnr_sum / samples.size();
    return report;
}

}  // namespace pseudoisp
