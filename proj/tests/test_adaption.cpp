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

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include "pseudoisp/config.hpp"

namespace pseudoisp {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("pseudoisp_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

TEST(GaussianBlur, KernelIsNormalisedAndSymmetric) {
    const auto k = gaussian_kernel(5, 1.0);
    ASSERT_EQ(k.size(), 5u);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(k[0], k[4]);
    EXPECT_EQ(k[1], k[3]);
    EXPECT_GT(k[2], k[1]);
    EXPECT_NEAR(k[1] / k[2], std::exp(-0.5), 1e-12);
}

TEST(GaussianBlur, PreservesConstantImages) {
    Image img(3, 9, 7, 0.375f);
    const Image out = gaussian_blur(img);
    for (float v : out.data) EXPECT_NEAR(v, 0.375f, 1e-6);
}

TEST(GaussianBlur, MatchesDirectConvolutionInInterior) {
    const Image img = make_scene(SceneKind::texture, 16, 16, 1);
    const Image out = gaussian_blur(img);
    const auto k = gaussian_kernel(5, 1.0);
    double acc = 0;
    for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) acc += k[dy + 2] * k[dx + 2] * img.at(1, 8 + dy, 7 + dx);
    EXPECT_NEAR(out.at(1, 8, 7), acc, 1e-5);
}

TEST(Denoiser, ZeroInitIsIdentity) {
    const auto d = Denoiser::compact_cnn(CompactCnnArch{8, 3, true}, 2);
    const Image img = make_scene(SceneKind::composite, 16, 16, 3);
    EXPECT_EQ(d.denoise(img), img);
}

TEST(Denoiser, CheckpointRoundTrip) {
    const auto d = Denoiser::compact_cnn(CompactCnnArch{8, 3, false}, 4);
    const auto dir = fresh_dir("denoiser_ckpt");
    fs::create_directories(dir);
    d.save(dir / "d.ckpt");
    const auto back = Denoiser::load(dir / "d.ckpt");
    const Image img = make_scene(SceneKind::composite, 16, 16, 5);
    EXPECT_EQ(back.denoise(img), d.denoise(img));
    Denoiser::gaussian().save(dir / "g.ckpt");
    EXPECT_EQ(Denoiser::load(dir / "g.ckpt").kind, DenoiserKind::gaussian_blur);
    fs::remove_all(dir);
}

TEST(PseudoPairs, OnePerNoisyImage) {
    std::vector<Image> noisy;
    for (int i = 0; i < 4; ++i) noisy.push_back(make_scene(SceneKind::composite, 16, 16, i));
    const auto pairs = build_pseudo_pairs(Denoiser::gaussian(), name_images(noisy, "noisy"));
    ASSERT_EQ(pairs.size(), 4u);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EXPECT_EQ(pairs[i].noisy, noisy[i]);
        EXPECT_EQ(pairs[i].pseudo_clean, clip01(gaussian_blur(noisy[i])));
        EXPECT_EQ(pairs[i].source_id, "noisy_00" + std::to_string(i));
    }
}

TEST(PseudoPairs, IdentityDenoiserAndErrors) {
    const auto noisy = name_images({make_scene(SceneKind::composite, 16, 16, 9)}, "n");
    const auto pairs = build_pseudo_pairs(Denoiser::compact_cnn(CompactCnnArch{8, 3, true}, 1), noisy);
    EXPECT_EQ(pairs[0].pseudo_clean, noisy[0].image);
    EXPECT_THROW(build_pseudo_pairs(Denoiser::gaussian(), {}), std::invalid_argument);
}

TEST(StratifiedSampler, ExactCounts) {
    for (double r : {0.0, 0.25, 0.5, 0.3, 1.0}) {
        StratifiedSampler s(16, r);
        long long total = 0;
        for (long long k = 0; k < 1000; ++k) {
            const int n = s.synthetic_in_batch(k);
            EXPECT_GE(n, 0);
            EXPECT_LE(n, 16);
            total += n;
        }
        EXPECT_EQ(total, static_cast<long long>(std::floor(1000 * 16 * r + 1e-9))) << "r=" << r;
    }
    StratifiedSampler half(16, 0.5);
    for (long long k = 0; k < 10; ++k) EXPECT_EQ(half.synthetic_in_batch(k), 8);
}

struct TinyBench {
    RunConfig config = preset_config("tiny");
    SimulatedDataset ds = build_dataset(config);
    BenchmarkSets sets = benchmark_sets(ds);
};

const TinyBench& tiny() {
    static const TinyBench b;
    return b;
}

TEST(GaussianBlur, ImprovesSimulatorNoisyImages) {
    const auto& b = tiny();
    const auto pairs = build_pseudo_pairs(Denoiser::gaussian(), b.sets.noisy);
    double noisy = 0, blurred = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        noisy += psnr(pairs[i].noisy, b.sets.noisy_references[i]);
        blurred += psnr(pairs[i].pseudo_clean, b.sets.noisy_references[i]);
    }
    EXPECT_GT(blurred, noisy);
    const Image once = Denoiser::gaussian().denoise(pairs[0].noisy);
    EXPECT_EQ(Denoiser::gaussian().denoise(pairs[0].noisy), once);
}

TEST(Finetune, SamplerCountsFollowRatio) {
    const auto& b = tiny();
    auto pairs = build_pseudo_pairs(Denoiser::gaussian(), b.sets.noisy);
    std::vector<SyntheticPair> syn;
    for (const auto& c : b.sets.clean) syn.push_back({c.image, c.image, "copy", 0});
    AdaptionConfig a = b.config.adaption;
    a.finetune.iterations = 5;
    a.finetune.batch = 16;
    a.r = 1.0;
    auto f = finetune_denoiser(Denoiser::gaussian(), pairs, syn, a, 1);
    EXPECT_EQ(f.counts.synthetic, 80);
    EXPECT_EQ(f.counts.pseudo, 0);
    a.r = 0.5;
    f = finetune_denoiser(Denoiser::gaussian(), pairs, syn, a, 1);
    EXPECT_EQ(f.counts.synthetic, 40);
    EXPECT_EQ(f.counts.pseudo, 40);
    EXPECT_EQ(f.denoiser.kind, DenoiserKind::compact_cnn);
    EXPECT_EQ(f.loss.size(), 5u);
}

TEST(Finetune, RejectsMissingStores) {
    const auto& b = tiny();
    auto pairs = build_pseudo_pairs(Denoiser::gaussian(), b.sets.noisy);
    AdaptionConfig a = b.config.adaption;
    EXPECT_THROW(finetune_denoiser(Denoiser::gaussian(), {}, {}, a, 1), std::invalid_argument);
    a.r = 0.5;
    EXPECT_THROW(finetune_denoiser(Denoiser::gaussian(), pairs, {}, a, 1), std::invalid_argument);
    a.r = 0.0;
    EXPECT_NO_THROW(finetune_denoiser(Denoiser::gaussian(), pairs, {}, a, 1));
}

TEST(Adaption, SingleRoundLogsFourStages) {
    const auto& b = tiny();
    AdaptionConfig a = b.config.adaption;
    a.t_max = 1;
    const auto st = run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout);
    ASSERT_EQ(st.log.size(), 5u);
    for (int s = 1; s <= 4; ++s) EXPECT_EQ(st.log[s - 1].rfind("round 1 stage " + std::to_string(s) + ":", 0), 0u);
    EXPECT_NE(st.log[4].find("held-out PSNR"), std::string::npos);
    ASSERT_EQ(st.rounds.size(), 1u);
    EXPECT_EQ(st.rounds[0].pseudo_pairs, b.sets.noisy.size());
    // Image scope: every clean image passes through every per-image model.
    ASSERT_EQ(a.pseudo_isp.sharing_scope, SharingScope::image);
    EXPECT_EQ(st.rounds[0].synthetic_pairs, b.sets.clean.size() * b.sets.noisy.size());
    EXPECT_EQ(st.rounds[0].images.size(), b.sets.heldout.noisy.size());
}

TEST(Adaption, PseudoPairsComeFromCurrentDenoiser) {
    const auto& b = tiny();
    AdaptionConfig a = b.config.adaption;
    a.t_max = 2;
    a.early_stop = false;
    const auto st = run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout);
    ASSERT_EQ(st.rounds.size(), 2u);
    // The final store was rebuilt with the round-1 CNN, not the starting blur.
    a.t_max = 1;
    const auto first = run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout);
    const auto expect = build_pseudo_pairs(first.denoiser, b.sets.noisy);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(st.pseudo_pairs[i].pseudo_clean, expect[i].pseudo_clean);
    EXPECT_NE(st.pseudo_pairs[0].pseudo_clean, clip01(gaussian_blur(b.sets.noisy[0].image)));
}

TEST(Adaption, RejectsOverlappingSets) {
    const auto& b = tiny();
    EXPECT_THROW(run_adaption(b.sets.noisy, b.sets.noisy, Denoiser::gaussian(), b.config.adaption), std::invalid_argument);
}

TEST(Adaption, ReproducibleAndResumable) {
    const auto& b = tiny();
    AdaptionConfig a = b.config.adaption;
    a.early_stop = false;
    AdaptionRun run;
    run.config_hash = config_hash(b.config);
    run.run_dir = fresh_dir("adapt_a");
    const auto s1 = run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout, run);
    AdaptionRun run2 = run;
    run2.run_dir = fresh_dir("adapt_b");
    run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout, run2);
    for (const char* f : {"metrics.json", "round-01/metrics.json", "round-02/metrics.json", "round-02/denoiser.ckpt",
                          "round-01/pseudoisp-ckpts/model_000.ckpt", "round-01/synthetic/synthetic_0000.png"}) {
        ASSERT_TRUE(fs::exists(run.run_dir / f)) << f;
        EXPECT_EQ(slurp(run.run_dir / f), slurp(run2.run_dir / f)) << f;
    }

    // Drop the last round and resume; the rerun reproduces it exactly.
    const std::string round2 = slurp(run.run_dir / "round-02/metrics.json");
    fs::remove_all(run.run_dir / "round-02");
    const auto resumed = run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout, run);
    EXPECT_EQ(resumed.resumed_rounds, 1);
    EXPECT_EQ(slurp(run.run_dir / "round-02/metrics.json"), round2);
    EXPECT_EQ(resumed.rounds.back().psnr_db, s1.rounds.back().psnr_db);

    // A different config hash starts over.
    run.config_hash = "other";
    EXPECT_EQ(run_adaption(b.sets.noisy, b.sets.clean, Denoiser::gaussian(), a, b.sets.heldout, run).resumed_rounds, 0);
    fs::remove_all(run.run_dir);
    fs::remove_all(run2.run_dir);
}

TEST(Adaption, StageErrorsNameTheRound) {
    const auto& b = tiny();
    auto noisy = b.sets.noisy;
    noisy[0].image.data[0] = std::numeric_limits<float>::quiet_NaN();
    AdaptionConfig a = b.config.adaption;
    a.t_max = 1;
    try {
        run_adaption(noisy, b.sets.clean, Denoiser::gaussian(), a);
        FAIL() << "expected AdaptionError";
    } catch (const AdaptionError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("round 1: ", 0), 0u) << e.what();
    }
}

TEST(Adaption, ConfigValidation) {
    AdaptionConfig a;
    a.t_max = 0;
    EXPECT_THROW(a.validate(), std::invalid_argument);
    a = {};
    a.r = 1.5;
    EXPECT_THROW(a.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace pseudoisp
