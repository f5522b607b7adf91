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

#include <functional>

#include "pseudoisp/config.hpp"

namespace pseudoisp {

struct PatchScore {
    int top = 0;
    int left = 0;
    ElementwiseMapScores scores;
};

/// Both assumption checks on one simulated dataset: the element-wise map
/// between true and pseudo raw, and the Taylor prediction of the noise level.
struct AssumptionReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    double pseudoisp_final_loss = 0;
    PatchScore fit_patch;
    std::vector<PatchScore> heldout_patches;
    double min_heldout_forward_psnr = 0;
    double min_heldout_roundtrip_psnr = 0;
    VerificationReport taylor;

    nlohmann::json to_json() const {
        auto patch = [](const PatchScore& p) {
            return nlohmann::json{{"top", p.top},
                                  {"left", p.left},
                                  {"forward_psnr_db", p.scores.forward_psnr},
                                  {"inverse_psnr_db", p.scores.inverse_psnr},
                                  {"roundtrip_psnr_db", p.scores.roundtrip_psnr}};
        };
        nlohmann::json j{{"config_hash", config_hash}, {"seed", seed}, {"pseudoisp_final_loss", pseudoisp_final_loss}};
        j["map"]["fit_patch"] = patch(fit_patch);
        j["map"]["heldout_patches"] = nlohmann::json::array();
        for (const auto& p : heldout_patches) j["map"]["heldout_patches"].push_back(patch(p));
        j["map"]["min_heldout_forward_psnr_db"] = min_heldout_forward_psnr;
        j["map"]["min_heldout_roundtrip_psnr_db"] = min_heldout_roundtrip_psnr;
        j["taylor"] = taylor.to_json();
        return j;
    }
};

namespace detail {
/// Side-by-side concatenation of equally tall packed images.
inline Image concat_width(const std::vector<Image>& parts) {
    int width = 0;
    for (const auto& p : parts) width += p.width;
    Image out(parts.front().channels, parts.front().height, width);
    int left = 0;
    for (const auto& p : parts) {
        if (p.channels != out.channels || p.height != out.height)
            throw ShapeError("concat_width: mismatched part " + shape_string(p));
        for (int c = 0; c < p.channels; ++c)
            for (int y = 0; y < p.height; ++y)
                for (int x = 0; x < p.width; ++x) out.at(c, y, left + x) = p.at(c, y, x);
        left += p.width;
    }
    return out;
}
}  // namespace detail

/// Trains one Pseudo-ISP on simulator pairs (noisy sRGB, true clean sRGB) of
/// the noisy split, fits f and f^-1 on one packed patch of the first noisy
/// image, scores the map on the remaining corner patches, and compares the
/// learned noise level with the Taylor prediction on the held-out split.
/// The Taylor prediction uses a second map fitted on all noisy-split clean raw.
/// With a non-empty `out_dir`, writes report.json and the four map panels.
inline AssumptionReport verify_assumptions(const RunConfig& c, const std::filesystem::path& out_dir = {},
                                           const std::function<void(const std::string&)>& on_log = {}) {
    auto log = [&](const std::string& s) {
        if (on_log) on_log(s);
    };
    c.validate();
    const SimulatedDataset ds = build_dataset(c);
    if (ds.heldout.empty()) throw std::invalid_argument("verify: the dataset needs at least one held-out image");

    std::vector<PseudoPair> pairs;
    for (const auto& s : ds.noisy) pairs.push_back({s.srgb, s.clean_srgb, s.id});
    TrainConfig tc = c.adaption.pseudo_isp;
    tc.sharing_scope = SharingScope::set;
    AssumptionReport report;
    report.config_hash = config_hash(c);
    report.seed = c.seed;
    auto trained = train_pseudoisp(pairs, tc);
    report.pseudoisp_final_loss = trained.report.final_smoothed;
    const auto& model = trained.model;
    log("trained Pseudo-ISP on " + std::to_string(pairs.size()) + " simulator pairs, final loss " +
        std::to_string(report.pseudoisp_final_loss));

    // Map fit: one patch of the first noisy image, scored on the other corners.
    const auto& image = ds.noisy.front();
    const Image pseudo = pseudo_raw(model, image.srgb);
    const Image gt = pack_raw(image.noisy_raw);
    const int p = c.verify.patch / 2;  // packed pixels
    if (2 * p > pseudo.height || 2 * p > pseudo.width)
        throw std::invalid_argument("verify: patch " + std::to_string(c.verify.patch) + " too large for " +
                                    std::to_string(image.srgb.height) + "x" + std::to_string(image.srgb.width) +
                                    " images (two patches must fit per side)");
    const int bottom = pseudo.height - p, right = pseudo.width - p;
    const auto map = fit_elementwise_map(crop(gt, 0, 0, p, p), crop(pseudo, 0, 0, p, p), c.verify.map);
    report.fit_patch = {0, 0, score_elementwise_map(map, crop(gt, 0, 0, p, p), crop(pseudo, 0, 0, p, p))};
    report.min_heldout_forward_psnr = report.min_heldout_roundtrip_psnr = kPsnrCapDb;
    for (auto [top, left] : {std::pair{0, right}, std::pair{bottom, 0}, std::pair{bottom, right}}) {
        PatchScore s{top, left, score_elementwise_map(map, crop(gt, top, left, p, p), crop(pseudo, top, left, p, p))};
        report.min_heldout_forward_psnr = std::min(report.min_heldout_forward_psnr, s.scores.forward_psnr);
        report.min_heldout_roundtrip_psnr = std::min(report.min_heldout_roundtrip_psnr, s.scores.roundtrip_psnr);
        report.heldout_patches.push_back(s);
    }
    log("element-wise map: held-out forward PSNR >= " + std::to_string(report.min_heldout_forward_psnr) +
        " dB, round trip >= " + std::to_string(report.min_heldout_roundtrip_psnr) + " dB");

    // The Taylor check needs f over the whole intensity range, so it uses a map
    // fitted on the clean raw of every noisy-split image rather than one patch.
    std::vector<Image> gt_parts, pseudo_parts;
    for (const auto& s : ds.noisy) {
        gt_parts.push_back(pack_raw(s.clean_raw));
        pseudo_parts.push_back(pseudo_raw(model, s.clean_srgb));
    }
    const auto full_map =
        fit_elementwise_map(detail::concat_width(gt_parts), detail::concat_width(pseudo_parts), c.verify.map);
    std::vector<VerificationSample> samples;
    for (const auto& s : ds.heldout) samples.push_back(verification_sample(s));
    report.taylor = verify_taylor_noise_model(c.profile, full_map, model, samples, c.verify.taylor);
    gt_parts.clear();
    pseudo_parts.clear();
    for (const auto& s : ds.heldout) {
        gt_parts.push_back(pack_raw(s.clean_raw));
        pseudo_parts.push_back(pseudo_raw(model, s.clean_srgb));
    }
    report.taylor.map_scores =
        score_elementwise_map(full_map, detail::concat_width(gt_parts), detail::concat_width(pseudo_parts));
    log("noise level vs Taylor prediction: max bin relative error " + std::to_string(report.taylor.max_bin_rel_error));

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        detail::write_json(out_dir / "report.json", report.to_json());
        write_assumption_panels(out_dir / "panels", map, gt, pseudo);
        model.to_checkpoint().save(out_dir / "pseudoisp.ckpt");
    }
    return report;
}

}  // namespace pseudoisp
