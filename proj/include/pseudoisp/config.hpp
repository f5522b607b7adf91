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

// Run configuration: JSON schema, named presets and the config hash.
//
// A config file is a JSON object. "preset" (tiny | desk | paper, default desk)
// selects the base values; every other key overrides a field of that preset.
// Unknown keys are rejected so that typos do not silently fall back to
// defaults. See docs/config.md for the schema.

#include <cstdio>
#include <fstream>
#include <set>

#include "pseudoisp/adaption.hpp"
#include "pseudoisp/scenes.hpp"

namespace pseudoisp {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetConfig {
    int noisy = 10;    // noisy images the loop adapts to
    int heldout = 4;   // noisy images used only for evaluation
    int clean = 20;    // unpaired clean images
    int height = 64;
    int width = 64;
};

struct VerifyConfig {
    int patch = 32;                 // sRGB patch edge used for the element-wise map fit
    ElementwiseMapOptions map;
    VerificationOptions taylor;
};

struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 0;
    CameraProfile profile = CameraProfile::reference();
    DatasetConfig dataset;
    DenoiserKind denoiser = DenoiserKind::gaussian_blur;
    AdaptionConfig adaption;
    VerifyConfig verify;

    /// Derives every sub-seed from `s`.
    void set_seed(std::uint64_t s) {
        seed = s;
        profile.seed = derive_seed(s, {1});
        adaption.seed = derive_seed(s, {2});
        adaption.pseudo_isp.seed = derive_seed(s, {3});
        verify.map.seed = derive_seed(s, {4});
    }

    void paper_scale() { adaption.pseudo_isp.paper_scale(); }

    void validate() const {
        profile.validate();
        adaption.validate();
        if (dataset.noisy < 1 || dataset.heldout < 0 || dataset.clean < 1)
            throw std::invalid_argument("config: dataset needs >= 1 noisy and >= 1 clean image");
        if (dataset.height < 16 || dataset.width < 16 || dataset.height % 2 || dataset.width % 2)
            throw std::invalid_argument("config: dataset dims must be even and >= 16");
        if (verify.patch < 16 || verify.patch % 2) throw std::invalid_argument("config: verify.patch must be even and >= 16");
        if (verify.map.width % 4 || verify.map.width < 4) throw std::invalid_argument("config: verify.map.width must be a multiple of 4");
    }
};

/// tiny: seconds-scale smoke runs. desk: the acceptance benchmark on one CPU.
/// paper: the published architecture widths and schedule.
inline RunConfig preset_config(const std::string& name) {
    RunConfig c;
    c.preset = name;
    auto& p = c.adaption.pseudo_isp;
    auto& ft = c.adaption.finetune;
    if (name == "paper") {
        // Library defaults are the published values.
        c.dataset = {10, 4, 20, 128, 128};
    } else if (name == "desk") {
        c.dataset = {10, 4, 20, 96, 96};
        p.arch.width = p.arch.noise_width = 16;
        p.arch.residual = true;
        p.patch_size = 32;
        p.batch = 8;
        p.iters_stage1 = 2400;
        p.iters_stage2 = 600;
        p.lr1 = 2e-3;
        p.lr2 = 2e-4;
        p.sharing_scope = SharingScope::set;
        c.adaption.denoiser_arch.width = 32;
        ft.iterations = 1500;
        ft.batch = 8;
        ft.patch_size = 32;
        c.verify.patch = 48;
    } else if (name == "tiny") {
        c.dataset = {3, 2, 4, 32, 32};
        p.arch.width = p.arch.noise_width = 8;
        p.arch.depth = 3;
        p.patch_size = 16;
        p.batch = 4;
        p.iters_stage1 = 20;
        p.iters_stage2 = 10;
        p.lr1 = 1e-3;
        p.lr2 = 1e-4;
        c.adaption.t_max = 2;
        c.adaption.denoiser_arch.width = 8;
        c.adaption.denoiser_arch.depth = 3;
        ft.iterations = 20;
        ft.batch = 4;
        ft.patch_size = 24;
        c.verify.patch = 16;
        c.verify.map.iterations = 200;
        c.verify.taylor.min_count = 8;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "' (expected tiny, desk or paper)");
    }
    c.set_seed(0);
    return c;
}

namespace detail {

// Copies j[key] into `out` when present and erases it from the pending set.
template <typename V>
void take(const nlohmann::json& j, const char* key, V& out, std::set<std::string>& seen) {
    if (!j.contains(key)) return;
    seen.insert(key);
    out = j.at(key).get<V>();
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& seen, const std::string& where) {
    for (const auto& [k, v] : j.items())
        if (!seen.count(k)) throw std::invalid_argument("config: unknown key '" + where + k + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    const auto& p = c.adaption.pseudo_isp;
    const auto& a = c.adaption;
    nlohmann::json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["preset"] = c.preset;
    j["seed"] = c.seed;
    j["profile"] = c.profile.to_json();
    j["dataset"] = {{"noisy", c.dataset.noisy},
                    {"heldout", c.dataset.heldout},
                    {"clean", c.dataset.clean},
                    {"height", c.dataset.height},
                    {"width", c.dataset.width}};
    j["denoiser"] = to_string(c.denoiser);
    j["pseudo_isp"] = {{"patch_size", p.patch_size},
                       {"batch", p.batch},
                       {"iters_stage1", p.iters_stage1},
                       {"iters_stage2", p.iters_stage2},
                       {"lr1", p.lr1},
                       {"lr2", p.lr2},
                       {"lambda", p.lambda},
                       {"sharing_scope", to_string(p.sharing_scope)},
                       {"seed", p.seed},
                       {"loss_variant", to_string(p.loss_variant)},
                       {"width", p.arch.width},
                       {"noise_width", p.arch.noise_width},
                       {"depth", p.arch.depth},
                       {"noise_output", to_string(p.arch.noise_output)},
                       {"residual", p.arch.residual},
                       {"tile_size", p.tile_size}};
    j["adaption"] = {{"t_max", a.t_max},
                     {"r", a.r},
                     {"finetune_iters", a.finetune.iterations},
                     {"finetune_batch", a.finetune.batch},
                     {"finetune_patch", a.finetune.patch_size},
                     {"finetune_lr", a.finetune.learning_rate},
                     {"denoiser_width", a.denoiser_arch.width},
                     {"denoiser_depth", a.denoiser_arch.depth},
                     {"denoiser_zero_init_output", a.denoiser_arch.zero_init_output},
                     {"synthetic_per_clean", a.synthetic_per_clean},
                     {"warm_start_pseudoisp", a.warm_start_pseudoisp},
                     {"early_stop", a.early_stop},
                     {"early_stop_db", a.early_stop_db},
                     {"write_synthetic_images", a.write_synthetic_images},
                     {"seed", a.seed}};
    j["verify"] = {{"patch", c.verify.patch},
                   {"map_width", c.verify.map.width},
                   {"map_depth", c.verify.map.depth},
                   {"map_iters", c.verify.map.iterations},
                   {"map_lr", c.verify.map.learning_rate},
                   {"map_seed", c.verify.map.seed},
                   {"bin_lo", c.verify.taylor.bin_lo},
                   {"bin_hi", c.verify.taylor.bin_hi},
                   {"bins", c.verify.taylor.bins},
                   {"min_count", c.verify.taylor.min_count}};
    return j;
}

/// Preset named by j["preset"] overlaid with the remaining keys. A top-level
/// "seed" re-derives all sub-seeds before section-level seeds are applied.
inline RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    std::set<std::string> seen{"schema_version"};
    if (j.contains("schema_version") && j["schema_version"].get<int>() != kConfigSchemaVersion)
        throw std::invalid_argument("config: unsupported schema_version " + j["schema_version"].dump());
    std::string preset = "desk";
    detail::take(j, "preset", preset, seen);
    RunConfig c = preset_config(preset);
    if (j.contains("seed")) {
        seen.insert("seed");
        c.set_seed(j["seed"].get<std::uint64_t>());
    }
    if (j.contains("profile")) {
        seen.insert("profile");
        c.profile = CameraProfile::from_json(j["profile"]);
    }
    if (j.contains("dataset")) {
        seen.insert("dataset");
        const auto& d = j["dataset"];
        std::set<std::string> s;
        detail::take(d, "noisy", c.dataset.noisy, s);
        detail::take(d, "heldout", c.dataset.heldout, s);
        detail::take(d, "clean", c.dataset.clean, s);
        detail::take(d, "height", c.dataset.height, s);
        detail::take(d, "width", c.dataset.width, s);
        detail::reject_unknown(d, s, "dataset.");
    }
    if (j.contains("denoiser")) {
        seen.insert("denoiser");
        c.denoiser = denoiser_kind_from_string(j["denoiser"].get<std::string>());
    }
    if (j.contains("pseudo_isp")) {
        seen.insert("pseudo_isp");
        const auto& d = j["pseudo_isp"];
        auto& p = c.adaption.pseudo_isp;
        std::set<std::string> s;
        detail::take(d, "patch_size", p.patch_size, s);
        detail::take(d, "batch", p.batch, s);
        detail::take(d, "iters_stage1", p.iters_stage1, s);
        detail::take(d, "iters_stage2", p.iters_stage2, s);
        detail::take(d, "lr1", p.lr1, s);
        detail::take(d, "lr2", p.lr2, s);
        detail::take(d, "lambda", p.lambda, s);
        detail::take(d, "seed", p.seed, s);
        detail::take(d, "width", p.arch.width, s);
        detail::take(d, "noise_width", p.arch.noise_width, s);
        detail::take(d, "depth", p.arch.depth, s);
        detail::take(d, "tile_size", p.tile_size, s);
        detail::take(d, "residual", p.arch.residual, s);
        std::string str;
        if (d.contains("sharing_scope")) {
            detail::take(d, "sharing_scope", str, s);
            p.sharing_scope = sharing_scope_from_string(str);
        }
        if (d.contains("loss_variant")) {
            detail::take(d, "loss_variant", str, s);
            p.loss_variant = noise_loss_from_string(str);
        }
        if (d.contains("noise_output")) {
            detail::take(d, "noise_output", str, s);
            p.arch.noise_output = activation_from_string(str);
        }
        detail::reject_unknown(d, s, "pseudo_isp.");
    }
    if (j.contains("adaption")) {
        seen.insert("adaption");
        const auto& d = j["adaption"];
        auto& a = c.adaption;
        std::set<std::string> s;
        detail::take(d, "t_max", a.t_max, s);
        detail::take(d, "r", a.r, s);
        detail::take(d, "finetune_iters", a.finetune.iterations, s);
        detail::take(d, "finetune_batch", a.finetune.batch, s);
        detail::take(d, "finetune_patch", a.finetune.patch_size, s);
        detail::take(d, "finetune_lr", a.finetune.learning_rate, s);
        detail::take(d, "denoiser_width", a.denoiser_arch.width, s);
        detail::take(d, "denoiser_depth", a.denoiser_arch.depth, s);
        detail::take(d, "denoiser_zero_init_output", a.denoiser_arch.zero_init_output, s);
        detail::take(d, "synthetic_per_clean", a.synthetic_per_clean, s);
        detail::take(d, "warm_start_pseudoisp", a.warm_start_pseudoisp, s);
        detail::take(d, "early_stop", a.early_stop, s);
        detail::take(d, "early_stop_db", a.early_stop_db, s);
        detail::take(d, "write_synthetic_images", a.write_synthetic_images, s);
        detail::take(d, "seed", a.seed, s);
        detail::reject_unknown(d, s, "adaption.");
    }
    if (j.contains("verify")) {
        seen.insert("verify");
        const auto& d = j["verify"];
        auto& v = c.verify;
        std::set<std::string> s;
        detail::take(d, "patch", v.patch, s);
        detail::take(d, "map_width", v.map.width, s);
        detail::take(d, "map_depth", v.map.depth, s);
        detail::take(d, "map_iters", v.map.iterations, s);
        detail::take(d, "map_lr", v.map.learning_rate, s);
        detail::take(d, "map_seed", v.map.seed, s);
        detail::take(d, "bin_lo", v.taylor.bin_lo, s);
        detail::take(d, "bin_hi", v.taylor.bin_hi, s);
        detail::take(d, "bins", v.taylor.bins, s);
        detail::take(d, "min_count", v.taylor.min_count, s);
        detail::reject_unknown(d, s, "verify.");
    }
    detail::reject_unknown(j, seen, "");
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// 64-bit FNV-1a of the canonical JSON form, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// The simulated benchmark described by the config: procedural scenes split
/// into adaption, held-out and clean sets.
inline SimulatedDataset build_dataset(const RunConfig& c) {
    const int total = c.dataset.noisy + c.dataset.heldout + c.dataset.clean;
    const auto scenes = make_scene_set(total, c.dataset.height, c.dataset.width, derive_seed(c.seed, {5}));
    return simulate_dataset(c.profile, scenes, DatasetSplit{c.dataset.noisy, c.dataset.heldout}, derive_seed(c.seed, {6}));
}

struct BenchmarkSets {
    std::vector<NamedImage> noisy;
    std::vector<NamedImage> clean;
    std::vector<Image> noisy_references;  // hidden clean sRGB of the noisy set
    EvaluationSet heldout;
};

inline BenchmarkSets benchmark_sets(const SimulatedDataset& ds) {
    BenchmarkSets b;
    for (const auto& s : ds.noisy) {
        b.noisy.push_back({s.id, s.srgb});
        b.noisy_references.push_back(s.clean_srgb);
    }
    for (const auto& s : ds.clean) b.clean.push_back({s.id, s.srgb});
    for (const auto& s : ds.heldout) {
        b.heldout.noisy.push_back({s.id, s.srgb});
        b.heldout.clean.push_back(s.clean_srgb);
    }
    return b;
}

inline Denoiser initial_denoiser(const RunConfig& c) {
    if (c.denoiser == DenoiserKind::gaussian_blur) return Denoiser::gaussian();
    return Denoiser::compact_cnn(c.adaption.denoiser_arch, derive_seed(c.seed, {7}));
}

}  // namespace pseudoisp
