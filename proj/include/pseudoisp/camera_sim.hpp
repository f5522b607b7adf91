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

// Ground-truth camera: RGGB sensor with heteroscedastic Gaussian noise
// (variance a*x + b per colour) and an invertible ISP consisting of bilinear
// demosaicking, a 3x3 colour mix and a per-channel power-law tone curve.

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pseudoisp/checkpoint.hpp"
#include "pseudoisp/image.hpp"
#include "pseudoisp/ops.hpp"
#include "pseudoisp/random.hpp"

namespace pseudoisp {

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Heteroscedastic noise level function per colour (R, G, B): sigma^2 = a*x + b.
struct NoiseLevelFunction {
    std::array<double, 3> a{0.0, 0.0, 0.0};
    std::array<double, 3> b{0.0, 0.0, 0.0};

    double stddev(int color, double x) const { return std::sqrt(std::max(0.0, a[color] * x + b[color])); }
};

struct CameraProfile {
    NoiseLevelFunction nlf{{0.02, 0.02, 0.02}, {1e-3, 1e-3, 1e-3}};
    std::array<double, 3> tone_gamma{1 / 2.2, 1 / 2.2, 1 / 2.2};
    std::array<double, 3> channel_gain{1.0, 1.0, 1.0};
    Matrix3 color_mix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    double headroom = 0.5;  // clean raw values live in [0, 1 + headroom]
    std::uint64_t seed = 0;

    /// Identity ISP with no noise parameters changed: gamma = gain = 1, identity mix.
    static CameraProfile identity() {
        CameraProfile p;
        p.tone_gamma = {1, 1, 1};
        return p;
    }

    /// The reference simulator camera: a = 0.02, b = 1e-3, gamma = 1/2.2 and a mild colour mix.
    static CameraProfile reference() {
        CameraProfile p;
        p.color_mix = {{{0.80, 0.15, 0.05}, {0.10, 0.80, 0.10}, {0.05, 0.15, 0.80}}};
        return p;
    }

    double noise_stddev(int color, double x) const { return nlf.stddev(color, x); }

    double tone(int c, double x) const { return channel_gain[c] * std::pow(std::max(x, 0.0), tone_gamma[c]); }
    double inverse_tone(int c, double s) const {
        return std::pow(std::max(s, 0.0) / channel_gain[c], 1.0 / tone_gamma[c]);
    }

    Eigen::Matrix3d mix_matrix() const {
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = color_mix[i][j];
        return m;
    }

    void validate() const {
        for (int c = 0; c < 3; ++c) {
            if (!(nlf.a[c] >= 0)) throw std::invalid_argument("camera profile: NLF a must be >= 0");
            if (!(nlf.b[c] > 0)) throw std::invalid_argument("camera profile: NLF b must be > 0");
            if (!(tone_gamma[c] > 0)) throw std::invalid_argument("camera profile: tone gamma must be > 0");
            if (!(channel_gain[c] > 0)) throw std::invalid_argument("camera profile: channel gain must be > 0");
            if (!(color_mix[c][c] > 0)) throw std::invalid_argument("camera profile: colour mix diagonal must be > 0");
        }
        if (!(headroom >= 0)) throw std::invalid_argument("camera profile: headroom must be >= 0");
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(mix_matrix());
        const auto sv = svd.singularValues();
        if (sv(2) <= 0 || sv(0) / sv(2) > 1e3)
            throw std::invalid_argument("camera profile: colour mix is singular or badly conditioned");
    }

    nlohmann::json to_json() const {
        return {{"nlf_a", nlf.a},          {"nlf_b", nlf.b},       {"tone_gamma", tone_gamma},
                {"channel_gain", channel_gain}, {"color_mix", color_mix}, {"headroom", headroom},
                {"bayer_pattern", "RGGB"},  {"seed", seed}};
    }

    static CameraProfile from_json(const nlohmann::json& j) {
        CameraProfile p = reference();
        if (j.contains("nlf_a")) p.nlf.a = j["nlf_a"].get<std::array<double, 3>>();
        if (j.contains("nlf_b")) p.nlf.b = j["nlf_b"].get<std::array<double, 3>>();
        if (j.contains("tone_gamma")) p.tone_gamma = j["tone_gamma"].get<std::array<double, 3>>();
        if (j.contains("channel_gain")) p.channel_gain = j["channel_gain"].get<std::array<double, 3>>();
        if (j.contains("color_mix")) p.color_mix = j["color_mix"].get<Matrix3>();
        if (j.contains("headroom")) p.headroom = j["headroom"].get<double>();
        if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("bayer_pattern") && j["bayer_pattern"] != "RGGB")
            throw std::invalid_argument("camera profile: only the RGGB pattern is supported");
        p.validate();
        return p;
    }
};

/// Single-channel RGGB mosaic.
struct RawImage {
    Image mosaic;  // 1 x H x W

    static constexpr const char* pattern = "RGGB";
    int height() const { return mosaic.height; }
    int width() const { return mosaic.width; }
    float at(int y, int x) const { return mosaic.at(0, y, x); }
    float& at(int y, int x) { return mosaic.at(0, y, x); }
};

inline RawImage make_raw(int height, int width) {
    if (height % 2 || width % 2)
        throw ShapeError("raw image dims must be even, got " + std::to_string(height) + "x" + std::to_string(width));
    return RawImage{Image(1, height, width)};
}

/// Inverse ISP: sRGB scene -> clean linear RGGB mosaic.
inline RawImage render_clean_raw(const CameraProfile& profile, const Image& scene) {
    if (scene.channels != 3) throw ShapeError("render_clean_raw: scene must have 3 channels");
    RawImage raw = make_raw(scene.height, scene.width);
    const Eigen::Matrix3d inv = profile.mix_matrix().inverse();
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            Eigen::Vector3d lin;
            for (int c = 0; c < 3; ++c) lin(c) = profile.inverse_tone(c, std::clamp<double>(scene.at(c, y, x), 0.0, 1.0));
            const Eigen::Vector3d rgb = inv * lin;
            raw.at(y, x) = static_cast<float>(std::clamp(rgb(rggb_color(y, x)), 0.0, 1.0 + profile.headroom));
        }
    return raw;
}

/// y = x + sqrt(a*x + b) * n0 with n0 ~ N(0, 1) i.i.d.; no clipping.
inline RawImage add_raw_noise(const NoiseLevelFunction& nlf, const RawImage& clean, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    RawImage out = clean;
    for (int y = 0; y < clean.height(); ++y)
        for (int x = 0; x < clean.width(); ++x) {
            const double v = clean.at(y, x);
            const double n0 = normal(rng);
            out.at(y, x) = static_cast<float>(v + nlf.stddev(rggb_color(y, x), v) * n0);
        }
    return out;
}

inline RawImage add_raw_noise(const CameraProfile& profile, const RawImage& clean, std::uint64_t seed) {
    return add_raw_noise(profile.nlf, clean, seed);
}

/// Bilinear RGGB demosaic with mirrored borders; returns linear RGB (3 x H x W).
inline Image demosaic_bilinear(const RawImage& raw) {
    const int h = raw.height(), w = raw.width();
    Image out(3, h, w);
    static constexpr double k_rb[3][3] = {{0.25, 0.5, 0.25}, {0.5, 1.0, 0.5}, {0.25, 0.5, 0.25}};
    static constexpr double k_g[3][3] = {{0.0, 0.25, 0.0}, {0.25, 1.0, 0.25}, {0.0, 0.25, 0.0}};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                if (rggb_color(y, x) == c) {
                    out.at(c, y, x) = raw.at(y, x);
                    continue;
                }
                const auto& k = c == 1 ? k_g : k_rb;
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        // Mirroring preserves the CFA parity, so the colour test uses virtual coordinates.
                        if (rggb_color(y + dy + 2, x + dx + 2) != c) continue;
                        acc += k[dy + 1][dx + 1] * raw.at(reflect101(y + dy, h), reflect101(x + dx, w));
                    }
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

/// The ground-truth ISP: demosaic -> colour mix -> tone curve -> clip to [0, 1].
inline Image develop(const CameraProfile& profile, const RawImage& raw) {
    const Image rgb = demosaic_bilinear(raw);
    const Eigen::Matrix3d m = profile.mix_matrix();
    Image out(3, raw.height(), raw.width());
    for (int y = 0; y < raw.height(); ++y)
        for (int x = 0; x < raw.width(); ++x) {
            const Eigen::Vector3d v(rgb.at(0, y, x), rgb.at(1, y, x), rgb.at(2, y, x));
            const Eigen::Vector3d lin = m * v;
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) = static_cast<float>(std::clamp(profile.tone(c, lin(c)), 0.0, 1.0));
        }
    return out;
}

inline Image raw_as_image(const RawImage& raw) { return raw.mosaic; }

/// Packs a mosaic into 4 x H/2 x W/2 (R, G1, G2, B).
inline Image pack_raw(const RawImage& raw) {
    const int h = raw.height() / 2, w = raw.width() / 2;
    Image out(4, h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int r = 0; r < 2; ++r)
                for (int q = 0; q < 2; ++q) out.at(2 * r + q, i, j) = raw.at(2 * i + r, 2 * j + q);
    return out;
}

// ---------------------------------------------------------------------------
// Datasets

struct SimulatedImage {
    std::string id;
    std::string role;   // "noisy" or "clean"
    std::string split;  // noisy images: "adapt" or "heldout"
    Image srgb;         // what the camera delivers
    Image clean_srgb;   // hidden oracle: developed clean raw
    RawImage clean_raw;
    RawImage noisy_raw;  // empty for clean-role images
    std::uint64_t noise_seed = 0;
};

struct SimulatedDataset {
    CameraProfile profile;
    std::uint64_t seed = 0;
    std::vector<SimulatedImage> noisy;    // test noisy images used for adaption
    std::vector<SimulatedImage> heldout;  // noisy images kept for evaluation
    std::vector<SimulatedImage> clean;    // unpaired clean set

    std::vector<Image> noisy_images() const {
        std::vector<Image> out;
        for (const auto& s : noisy) out.push_back(s.srgb);
        return out;
    }
    std::vector<Image> clean_images() const {
        std::vector<Image> out;
        for (const auto& s : clean) out.push_back(s.srgb);
        return out;
    }
};

struct DatasetSplit {
    int noisy = -1;   // -1: half of the scenes (rounded up) minus held-out ones
    int heldout = 0;  // taken after the noisy images
};

inline SimulatedDataset simulate_dataset(const CameraProfile& profile, const std::vector<Image>& scenes,
                                         DatasetSplit split, std::uint64_t seed) {
    profile.validate();
    if (scenes.size() < 2) throw std::invalid_argument("simulate_dataset: need at least two scenes");
    const int total = static_cast<int>(scenes.size());
    const int n_noisy = split.noisy >= 0 ? split.noisy : (total + 1) / 2 - split.heldout;
    if (n_noisy < 1 || split.heldout < 0 || n_noisy + split.heldout >= total)
        throw std::invalid_argument("simulate_dataset: split leaves no noisy or no clean scenes");
    SimulatedDataset ds;
    ds.profile = profile;
    ds.seed = seed;
    char id[32];
    for (int i = 0; i < total; ++i) {
        std::snprintf(id, sizeof id, "scene_%03d", i);
        SimulatedImage s;
        s.id = id;
        s.clean_raw = render_clean_raw(profile, scenes[i]);
        s.clean_srgb = develop(profile, s.clean_raw);
        if (i < n_noisy + split.heldout) {
            s.role = "noisy";
            s.split = i < n_noisy ? "adapt" : "heldout";
            s.noise_seed = derive_seed(seed, {std::uint64_t(i), 0x6e6f697365ULL});
            s.noisy_raw = add_raw_noise(profile, s.clean_raw, s.noise_seed);
            s.srgb = develop(profile, s.noisy_raw);
            (i < n_noisy ? ds.noisy : ds.heldout).push_back(std::move(s));
        } else {
            s.role = "clean";
            s.srgb = s.clean_srgb;
            ds.clean.push_back(std::move(s));
        }
    }
    return ds;
}

/// Writes the noisy/clean sRGB sets as 16-bit PNGs, the hidden oracle as a
/// checkpoint container and a manifest; returns the manifest.
inline nlohmann::json write_dataset(const SimulatedDataset& ds, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    try {
        fs::create_directories(out_dir);
    } catch (const fs::filesystem_error& e) {
        throw std::runtime_error("generate_dataset: cannot create " + out_dir.string() + ": " + e.what());
    }
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["seed"] = ds.seed;
    manifest["profile"] = ds.profile.to_json();
    manifest["entries"] = nlohmann::json::array();
    Checkpoint oracle;
    oracle.metadata["profile"] = ds.profile.to_json();
    auto emit = [&](const SimulatedImage& s) {
        const std::string dir = s.role == "clean" ? "clean" : (s.split == "heldout" ? "heldout" : "noisy");
        const std::string rel = dir + "/" + s.id + ".png";
        write_png(out_dir / rel, s.srgb, 16);
        nlohmann::json e{{"id", s.id}, {"role", s.role}, {"file", rel}};
        if (s.role == "noisy") {
            e["split"] = s.split;
            e["noise_seed"] = s.noise_seed;
            oracle.put<float>(s.id + ".noisy_raw", {1, 1, s.noisy_raw.height(), s.noisy_raw.width()}, s.noisy_raw.mosaic.data);
        }
        oracle.put<float>(s.id + ".clean_raw", {1, 1, s.clean_raw.height(), s.clean_raw.width()}, s.clean_raw.mosaic.data);
        oracle.put<float>(s.id + ".clean_srgb", {1, 3, s.clean_srgb.height, s.clean_srgb.width}, s.clean_srgb.data);
        manifest["entries"].push_back(e);
    };
    for (const auto& s : ds.noisy) emit(s);
    for (const auto& s : ds.heldout) emit(s);
    for (const auto& s : ds.clean) emit(s);
    oracle.save(out_dir / "oracle" / "oracle.ckpt");
    manifest["entries"].push_back({{"id", "oracle"}, {"role", "oracle"}, {"file", "oracle/oracle.ckpt"}});
    std::ofstream mf(out_dir / "manifest.json");
    if (!mf) throw std::runtime_error("generate_dataset: cannot write " + (out_dir / "manifest.json").string());
    mf << manifest.dump(2) << '\n';
    return manifest;
}

inline nlohmann::json generate_dataset(const CameraProfile& profile, const std::vector<Image>& scenes,
                                       const std::filesystem::path& out_dir, DatasetSplit split = {},
                                       std::uint64_t seed = 0) {
    return write_dataset(simulate_dataset(profile, scenes, split, seed), out_dir);
}

/// Reads a dataset written by write_dataset. Oracle fields are filled from the sidecar.
inline SimulatedDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("load_dataset: cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_dataset: malformed manifest in " + dir.string() + ": " + e.what());
    }
    SimulatedDataset ds;
    ds.profile = CameraProfile::from_json(manifest.at("profile"));
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    const Checkpoint oracle = Checkpoint::load(dir / "oracle" / "oracle.ckpt");
    auto to_raw = [&](const std::string& name) {
        const auto& rec = oracle.at(name);
        RawImage r = make_raw(rec.shape[2], rec.shape[3]);
        std::transform(rec.values.begin(), rec.values.end(), r.mosaic.data.begin(),
                       [](double v) { return static_cast<float>(v); });
        return r;
    };
    for (const auto& e : manifest.at("entries")) {
        const auto role = e.at("role").get<std::string>();
        if (role == "oracle") continue;
        SimulatedImage s;
        s.id = e.at("id").get<std::string>();
        s.role = role;
        s.srgb = read_png(dir / e.at("file").get<std::string>());
        s.clean_raw = to_raw(s.id + ".clean_raw");
        const auto& cs = oracle.at(s.id + ".clean_srgb");
        s.clean_srgb = Image(3, cs.shape[2], cs.shape[3]);
        std::transform(cs.values.begin(), cs.values.end(), s.clean_srgb.data.begin(),
                       [](double v) { return static_cast<float>(v); });
        if (role == "noisy") {
            s.split = e.value("split", "adapt");
            s.noise_seed = e.value("noise_seed", std::uint64_t{0});
            s.noisy_raw = to_raw(s.id + ".noisy_raw");
            (s.split == "heldout" ? ds.heldout : ds.noisy).push_back(std::move(s));
        } else {
            ds.clean.push_back(std::move(s));
        }
    }
    return ds;
}

}  // namespace pseudoisp
