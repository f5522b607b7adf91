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

// Pseudo ISP: an sRGB -> pseudo-raw network, a packed-raw -> sRGB network and
// a pixel-wise noise estimator living in the pseudo-raw space. The two image
// streams (noisy Y and pseudo-clean X^) share both ISP networks.
//
//   sRGB [N,3,H,W] --srgb2raw--> dem [N,3,H,W] --cfa--> raw [N,1,H,W]
//        --pack--> [N,4,H/2,W/2] --raw2srgb--> [N,12,H/2,W/2] --pixel shuffle--> [N,3,H,W]
//   sigma = noise_net(pack(raw of X^))   (1x1 convolutions, 4 groups)

#include <numbers>
#include <optional>

#include "pseudoisp/image.hpp"
#include "pseudoisp/nn.hpp"
#include "pseudoisp/optim.hpp"
#include "pseudoisp/parallel.hpp"

namespace pseudoisp {

enum class SharingScope { patch, image, set };
enum class NoiseLoss { folded_normal, squared_residual };

inline std::string to_string(SharingScope s) {
    switch (s) {
        case SharingScope::patch: return "patch";
        case SharingScope::set: return "set";
        default: return "image";
    }
}
inline SharingScope sharing_scope_from_string(const std::string& s) {
    if (s == "patch") return SharingScope::patch;
    if (s == "image") return SharingScope::image;
    if (s == "set") return SharingScope::set;
    throw std::invalid_argument("unknown sharing scope '" + s + "' (expected patch, image or set)");
}
inline std::string to_string(NoiseLoss l) {
    return l == NoiseLoss::folded_normal ? "folded_normal" : "squared_residual";
}
inline NoiseLoss noise_loss_from_string(const std::string& s) {
    if (s == "folded_normal") return NoiseLoss::folded_normal;
    if (s == "squared_residual") return NoiseLoss::squared_residual;
    throw std::invalid_argument("unknown loss variant '" + s + "' (expected folded_normal or squared_residual)");
}

/// Layer widths. The published architecture uses 128 everywhere; smaller
/// widths keep CPU-only experiments tractable.
struct PseudoIspArch {
    int width = 128;        // hidden channels of both ISP networks
    int noise_width = 128;  // hidden channels of the noise estimator (multiple of 4)
    int depth = 6;
    Activation noise_output = Activation::softplus;
    // Identity skips around both ISP networks with zero-initialised output
    // layers; off in the published architecture.
    bool residual = false;
};

template <typename T>
class PseudoIspModel {
public:
    ConvStack<T> srgb2raw;   // 3 -> width x5 -> 3, 3x3
    ConvStack<T> raw2srgb;   // 4 -> width x5 -> 12, 3x3
    ConvStack<T> noise_net;  // 4 -> noise_width x5 -> 4, 1x1, groups = 4
    double lambda = 1.0;
    SharingScope scope = SharingScope::image;
    NoiseLoss loss_variant = NoiseLoss::folded_normal;
    std::string id = "pseudoisp";
    std::uint64_t iterations_trained = 0;
    bool residual = false;  // srgb2raw adds its input; raw2srgb adds the packed input to every colour

    PseudoIspModel() = default;

    PseudoIspModel(const PseudoIspArch& arch, Rng& rng, double lambda_ = 1.0) : lambda(lambda_) {
        if (!(lambda > 0)) throw std::invalid_argument("PseudoIspModel: lambda must be positive");
        if (arch.noise_width % 4) throw std::invalid_argument("PseudoIspModel: noise width must be a multiple of 4");
        srgb2raw = ConvStack<T>(stack_channels(3, arch.width, 3, arch.depth), 3, 1, Activation::relu,
                                Activation::none, rng);
        raw2srgb = ConvStack<T>(stack_channels(4, arch.width, 12, arch.depth), 3, 1, Activation::relu,
                                Activation::none, rng);
        noise_net = ConvStack<T>(stack_channels(4, arch.noise_width, 4, arch.depth), 1, 4, Activation::relu,
                                 arch.noise_output, rng);
        residual = arch.residual;
        if (residual) {
            srgb2raw.zero_output_layer();
            raw2srgb.zero_output_layer();
        }
    }

    std::vector<Tensor<T>> parameters() const {
        std::vector<Tensor<T>> out;
        for (const auto* net : {&srgb2raw, &raw2srgb, &noise_net}) {
            auto p = net->parameters();
            out.insert(out.end(), p.begin(), p.end());
        }
        return out;
    }

    bool all_finite() const { return srgb2raw.all_finite() && raw2srgb.all_finite() && noise_net.all_finite(); }

    PseudoIspModel clone() const {
        PseudoIspModel m = *this;
        m.srgb2raw = srgb2raw.clone();
        m.raw2srgb = raw2srgb.clone();
        m.noise_net = noise_net.clone();
        return m;
    }

    template <typename U>
    PseudoIspModel<U> cast() const {
        PseudoIspModel<U> m;
        m.srgb2raw = srgb2raw.template cast<U>();
        m.raw2srgb = raw2srgb.template cast<U>();
        m.noise_net = noise_net.template cast<U>();
        m.lambda = lambda;
        m.scope = scope;
        m.loss_variant = loss_variant;
        m.id = id;
        m.iterations_trained = iterations_trained;
        m.residual = residual;
        return m;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ckpt;
        ckpt.metadata["kind"] = "pseudoisp";
        ckpt.metadata["id"] = id;
        ckpt.metadata["lambda"] = lambda;
        ckpt.metadata["sharing_scope"] = to_string(scope);
        ckpt.metadata["loss_variant"] = to_string(loss_variant);
        ckpt.metadata["iterations_trained"] = iterations_trained;
        ckpt.metadata["residual"] = residual;
        srgb2raw.save(ckpt, "srgb2raw");
        raw2srgb.save(ckpt, "raw2srgb");
        noise_net.save(ckpt, "noise_net");
        return ckpt;
    }

    static PseudoIspModel from_checkpoint(const Checkpoint& ckpt) {
        if (ckpt.metadata.value("kind", "") != "pseudoisp")
            throw CheckpointError("checkpoint does not hold a Pseudo-ISP model");
        PseudoIspModel m;
        m.srgb2raw = ConvStack<T>::load(ckpt, "srgb2raw");
        m.raw2srgb = ConvStack<T>::load(ckpt, "raw2srgb");
        m.noise_net = ConvStack<T>::load(ckpt, "noise_net");
        m.lambda = ckpt.metadata.at("lambda").get<double>();
        m.scope = sharing_scope_from_string(ckpt.metadata.at("sharing_scope").get<std::string>());
        m.loss_variant = noise_loss_from_string(ckpt.metadata.at("loss_variant").get<std::string>());
        m.id = ckpt.metadata.value("id", "pseudoisp");
        m.iterations_trained = ckpt.metadata.value("iterations_trained", std::uint64_t{0});
        m.residual = ckpt.metadata.value("residual", false);
        return m;
    }
};

namespace detail {
inline void require_even_rgb(const Shape& s, const char* op) {
    require_rank4(s, op);
    if (s[1] != 3) throw ShapeError(std::string(op) + ": expected 3 channels, got " + to_string(s));
    if (s[2] % 2 || s[3] % 2) throw ShapeError(std::string(op) + ": spatial dims must be even, got " + to_string(s));
}
}  // namespace detail

/// sRGB -> pseudo-demosaiced 3-channel image (same spatial size).
template <typename T>
Tensor<T> srgb_to_dem(const PseudoIspModel<T>& model, const Tensor<T>& srgb) {
    detail::require_even_rgb(srgb.shape(), "srgb_to_dem");
    auto out = model.srgb2raw.forward(srgb);
    return model.residual ? add(out, srgb) : out;
}

/// sRGB -> packed pseudo raw [N,4,H/2,W/2].
template <typename T>
Tensor<T> srgb_to_packed(const PseudoIspModel<T>& model, const Tensor<T>& srgb) {
    return pack(cfa_sample(srgb_to_dem(model, srgb)));
}

/// Packed pseudo raw -> sRGB via the raw2srgb network and pixel-shuffle upsampling.
template <typename T>
Tensor<T> raw_to_srgb(const PseudoIspModel<T>& model, const Tensor<T>& packed) {
    detail::require_rank4(packed.shape(), "raw_to_srgb");
    if (packed.dim(1) != 4) throw ShapeError("raw_to_srgb: expected 4 packed channels, got " + to_string(packed.shape()));
    auto out = model.raw2srgb.forward(packed);
    // Channel 4c + p of the pre-shuffle tensor lands on Bayer site p of colour c.
    if (model.residual) out = add(out, concat_channels(std::vector<Tensor<T>>{packed, packed, packed}));
    return depth_to_space(out);
}

/// Pixel-wise noise standard deviation for a clean packed pseudo raw image.
template <typename T>
Tensor<T> estimate_sigma(const PseudoIspModel<T>& model, const Tensor<T>& packed_clean) {
    detail::require_rank4(packed_clean.shape(), "estimate_sigma");
    if (packed_clean.dim(1) != 4)
        throw ShapeError("estimate_sigma: expected 4 packed channels, got " + to_string(packed_clean.shape()));
    return model.noise_net.forward(packed_clean);
}

/// sRGB -> pseudo raw -> sRGB without noise.
template <typename T>
Tensor<T> round_trip(const PseudoIspModel<T>& model, const Tensor<T>& srgb) {
    return raw_to_srgb(model, srgb_to_packed(model, srgb));
}

template <typename T>
struct JointLossTerms {
    Tensor<T> total;
    Tensor<T> clean_reconstruction;  // |X^* - X^|^2
    Tensor<T> noisy_reconstruction;  // |Y* - Y|^2
    Tensor<T> noise;                 // sigma supervision term (before lambda)
};

/// The joint objective on one batch of (noisy, pseudo-clean) sRGB patches.
/// Each squared norm is a mean over its elements.
template <typename T>
JointLossTerms<T> joint_loss(const PseudoIspModel<T>& model, const Tensor<T>& noisy, const Tensor<T>& pseudo_clean) {
    detail::require_same_shape(noisy, pseudo_clean, "joint_loss");
    detail::require_even_rgb(noisy.shape(), "joint_loss");
    const Tensor<T> x_pack = srgb_to_packed(model, pseudo_clean);
    const Tensor<T> y_pack = srgb_to_packed(model, noisy);
    const Tensor<T> x_star = raw_to_srgb(model, x_pack);
    const Tensor<T> y_star = raw_to_srgb(model, y_pack);
    const Tensor<T> sigma = estimate_sigma(model, x_pack);
    const Tensor<T> residual = sub(y_pack, x_pack);

    JointLossTerms<T> terms;
    terms.clean_reconstruction = mse_loss(x_star, pseudo_clean);
    terms.noisy_reconstruction = mse_loss(y_star, noisy);
    if (model.loss_variant == NoiseLoss::folded_normal) {
        const T k = static_cast<T>(std::sqrt(std::numbers::pi / 2.0));
        terms.noise = mse_loss(sigma, scale(abs(residual), k));
    } else {
        terms.noise = mse_loss(square(sigma), square(residual));
    }
    terms.total = add(add(terms.clean_reconstruction, terms.noisy_reconstruction),
                      scale(terms.noise, static_cast<T>(model.lambda)));
    return terms;
}

// ---------------------------------------------------------------------------
// Training

/// A test noisy image together with the denoiser's estimate of its clean version.
struct PseudoPair {
    Image noisy;
    Image pseudo_clean;
    std::string source_id;
    int top = 0;
    int left = 0;
};

struct TrainConfig {
    int patch_size = 60;
    int batch = 32;
    int iters_stage1 = 1200;
    int iters_stage2 = 600;
    double lr1 = 1e-4;
    double lr2 = 1e-5;
    double lambda = 1.0;
    SharingScope sharing_scope = SharingScope::image;
    std::uint64_t seed = 0;
    NoiseLoss loss_variant = NoiseLoss::folded_normal;
    PseudoIspArch arch;
    int tile_size = 0;  // patch-scope tile edge; 0 picks half the image

    /// Restores the published schedule (8,000 + 4,000 iterations).
    TrainConfig& paper_scale() {
        iters_stage1 = 8000;
        iters_stage2 = 4000;
        return *this;
    }

    int total_iterations() const { return iters_stage1 + iters_stage2; }

    void validate() const {
        if (patch_size < 16 || patch_size % 2) throw std::invalid_argument("train config: patch_size must be even and >= 16");
        if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
        if (iters_stage1 < 0 || iters_stage2 < 0) throw std::invalid_argument("train config: negative iteration count");
        if (!(lr1 > 0) || !(lr2 > 0)) throw std::invalid_argument("train config: learning rates must be positive");
        if (!(lambda > 0)) throw std::invalid_argument("train config: lambda must be positive");
        if (tile_size % 2) throw std::invalid_argument("train config: tile_size must be even");
    }
};

struct TrainReport {
    std::vector<double> loss;           // total loss per iteration
    std::vector<double> noise_term;     // noise supervision term per iteration
    double initial_smoothed = 0.0;      // mean over the first min(100, n) iterations
    double final_smoothed = 0.0;        // mean over the last min(100, n) iterations
};

namespace detail {

inline void sample_patch(const PseudoPair& pair, int patch, Rng& rng, Image& noisy, Image& clean) {
    const int h = pair.noisy.height, w = pair.noisy.width;
    auto pick = [&](int extent) {
        if (extent <= patch) return 0;
        std::uniform_int_distribution<int> d(0, (extent - patch) / 2);
        return 2 * d(rng);  // even offsets keep the Bayer phase
    };
    const int top = pick(h), left = pick(w);
    if (h >= patch && w >= patch) {
        noisy = crop(pair.noisy, top, left, patch, patch);
        clean = crop(pair.pseudo_clean, top, left, patch, patch);
    } else {
        noisy = crop_reflect(pair.noisy, top, left, patch, patch);
        clean = crop_reflect(pair.pseudo_clean, top, left, patch, patch);
    }
}

inline double window_mean(const std::vector<double>& v, bool head) {
    if (v.empty()) return 0.0;
    const std::size_t n = std::min<std::size_t>(100, v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += head ? v[i] : v[v.size() - 1 - i];
    return s / static_cast<double>(n);
}

}  // namespace detail

struct TrainedPseudoIsp {
    PseudoIspModel<float> model;
    TrainReport report;
};

/// Adam training of one model on random patches drawn from `pairs`.
/// `init` warm-starts from an existing model instead of a fresh initialisation.
inline TrainedPseudoIsp train_pseudoisp(const std::vector<PseudoPair>& pairs, const TrainConfig& config,
                                        const PseudoIspModel<float>* init = nullptr) {
    config.validate();
    if (pairs.empty()) throw std::invalid_argument("train_pseudoisp: no training pairs");
    for (const auto& p : pairs)
        if (!p.noisy.same_shape(p.pseudo_clean) || p.noisy.channels != 3)
            throw ShapeError("train_pseudoisp: pair '" + p.source_id + "' has mismatched or non-RGB images");

    Rng rng(config.seed);
    TrainedPseudoIsp out;
    if (init) {
        out.model = init->clone();
    } else {
        out.model = PseudoIspModel<float>(config.arch, rng, config.lambda);
    }
    out.model.lambda = config.lambda;
    out.model.scope = config.sharing_scope;
    out.model.loss_variant = config.loss_variant;

    auto params = out.model.parameters();
    AdamState<float> adam(params, AdamOptions{config.lr1});
    std::uniform_int_distribution<std::size_t> pick_pair(0, pairs.size() - 1);
    std::vector<Image> noisy(config.batch), clean(config.batch);
    const int total = config.total_iterations();
    out.report.loss.reserve(total);
    for (int it = 0; it < total; ++it) {
        adam.set_learning_rate(it < config.iters_stage1 ? config.lr1 : config.lr2);
        for (int b = 0; b < config.batch; ++b)
            detail::sample_patch(pairs[pick_pair(rng)], config.patch_size, rng, noisy[b], clean[b]);
        std::vector<const Image*> np, cp;
        for (int b = 0; b < config.batch; ++b) {
            np.push_back(&noisy[b]);
            cp.push_back(&clean[b]);
        }
        const auto terms = joint_loss(out.model, to_tensor<float>(np), to_tensor<float>(cp));
        const double loss = terms.total.item();
        if (!std::isfinite(loss))
            throw NumericError("train_pseudoisp: non-finite loss at iteration " + std::to_string(it) +
                               " (clean recon " + std::to_string(terms.clean_reconstruction.item()) +
                               ", noisy recon " + std::to_string(terms.noisy_reconstruction.item()) +
                               ", noise " + std::to_string(terms.noise.item()) + ")");
        zero_grad<float>(params);
        backward(terms.total);
        adam_step<float>(params, adam);
        out.report.loss.push_back(loss);
        out.report.noise_term.push_back(terms.noise.item());
        ++out.model.iterations_trained;
    }
    if (!out.model.all_finite()) throw NumericError("train_pseudoisp: parameters became non-finite");
    out.report.initial_smoothed = detail::window_mean(out.report.loss, true);
    out.report.final_smoothed = detail::window_mean(out.report.loss, false);
    return out;
}

struct ScopedPseudoIsp {
    std::string id;
    std::vector<PseudoPair> pairs;  // the data this model was fitted to
    TrainedPseudoIsp trained;
};

/// Splits pairs into training groups according to the sharing scope:
/// one group for "set", one per image for "image", one per tile for "patch".
inline std::vector<std::pair<std::string, std::vector<PseudoPair>>> group_pairs(const std::vector<PseudoPair>& pairs,
                                                                               const TrainConfig& config) {
    std::vector<std::pair<std::string, std::vector<PseudoPair>>> groups;
    switch (config.sharing_scope) {
        case SharingScope::set:
            groups.emplace_back("set", pairs);
            break;
        case SharingScope::image:
            for (std::size_t i = 0; i < pairs.size(); ++i)
                groups.emplace_back(pairs[i].source_id.empty() ? "image_" + std::to_string(i) : pairs[i].source_id,
                                    std::vector<PseudoPair>{pairs[i]});
            break;
        case SharingScope::patch:
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                const auto& p = pairs[i];
                auto tile_for = [&](int extent) {
                    int t = config.tile_size > 0 ? config.tile_size : (extent / 2) & ~1;
                    return std::clamp(t, 2, extent) & ~1;
                };
                const int th = tile_for(p.noisy.height), tw = tile_for(p.noisy.width);
                for (int top = 0; top + th <= p.noisy.height; top += th)
                    for (int left = 0; left + tw <= p.noisy.width; left += tw) {
                        PseudoPair tile{crop(p.noisy, top, left, th, tw), crop(p.pseudo_clean, top, left, th, tw),
                                        p.source_id, p.top + top, p.left + left};
                        groups.emplace_back(p.source_id + "@" + std::to_string(tile.top) + "_" + std::to_string(tile.left),
                                            std::vector<PseudoPair>{std::move(tile)});
                    }
            }
            break;
    }
    return groups;
}

/// Trains one model per sharing group; groups run in parallel with
/// independent seeds, so results do not depend on the worker count.
inline std::vector<ScopedPseudoIsp> train_pseudoisp_scoped(const std::vector<PseudoPair>& pairs, const TrainConfig& config,
                                                           const std::vector<PseudoIspModel<float>>* warm = nullptr) {
    if (pairs.empty()) throw std::invalid_argument("train_pseudoisp: no training pairs");
    auto groups = group_pairs(pairs, config);
    std::vector<ScopedPseudoIsp> out(groups.size());
    parallel_for(groups.size(), [&](std::size_t g) {
        TrainConfig c = config;
        c.seed = derive_seed(config.seed, {g});
        const PseudoIspModel<float>* init = (warm && g < warm->size()) ? &(*warm)[g] : nullptr;
        out[g].id = groups[g].first;
        out[g].pairs = std::move(groups[g].second);
        out[g].trained = train_pseudoisp(out[g].pairs, c, init);
        out[g].trained.model.id = out[g].id;
    });
    return out;
}

}  // namespace pseudoisp
