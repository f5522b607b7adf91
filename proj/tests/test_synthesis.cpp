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

#include "pseudoisp/scenes.hpp"
#include "pseudoisp/synthesis.hpp"

namespace pseudoisp {
namespace {

PseudoIspModel<float> trained_looking_model(std::uint64_t seed) {
    PseudoIspArch arch;
    arch.width = 8;
    arch.noise_width = 8;
    arch.depth = 3;
    Rng rng(seed);
    PseudoIspModel<float> m(arch, rng);
    m.iterations_trained = 1;
    return m;
}

Image random_packed(int h, int w, std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(4, h, w);
    for (auto& v : img.data) v = static_cast<float>(u(rng));
    return img;
}

TEST(Synthesis, ZeroSigmaReducesToCleanRoundTrip) {
    auto m = trained_looking_model(1);
    m.noise_net.zero_output_layer();
    m.noise_net.set_output_activation(Activation::relu);
    const Image clean = make_scene(SceneKind::composite, 16, 16, 2);
    EXPECT_EQ(synthesize_noisy(m, clean, 3).noisy, clean_round_trip(m, clean));
}

TEST(Synthesis, SeedControlsNoise) {
    const auto m = trained_looking_model(4);
    const Image clean = make_scene(SceneKind::composite, 16, 16, 5);
    EXPECT_EQ(synthesize_noisy(m, clean, 6).noisy, synthesize_noisy(m, clean, 6).noisy);
    EXPECT_NE(synthesize_noisy(m, clean, 6).noisy, synthesize_noisy(m, clean, 7).noisy);
}

TEST(Synthesis, NoiseIsSigmaTimesStandardNormal) {
    const auto m = trained_looking_model(8);
    const auto t = synthesize_trace(m, make_scene(SceneKind::composite, 16, 16, 9), 10);
    ASSERT_EQ(t.noisy_packed.shape(), (Shape{1, 4, 8, 8}));
    const auto n0 = standard_normal<float>(t.clean_packed.shape(), 10);
    EXPECT_EQ(t.noise.values(), n0.values());
    for (std::size_t i = 0; i < t.sigma.numel(); ++i) {
        EXPECT_GE(t.sigma.data()[i], 0.0f);
        EXPECT_NEAR(t.noisy_packed.data()[i] - t.clean_packed.data()[i], t.sigma.data()[i] * n0.data()[i], 1e-6);
    }
}

TEST(Synthesis, OutputIsClipped) {
    const auto m = trained_looking_model(11);
    const auto pair = synthesize_noisy(m, make_scene(SceneKind::composite, 16, 16, 12), 13);
    for (float v : pair.noisy.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(pair.model_id, m.id);
    EXPECT_EQ(pair.seed, 13u);
}

TEST(Synthesis, StandardNormalMoments) {
    const auto n = standard_normal<double>({1, 1, 500, 500}, 14).values();
    double s = 0, s2 = 0;
    for (double v : n) {
        s += v;
        s2 += v * v;
    }
    const double mean = s / n.size();
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(s2 / n.size() - mean * mean, 1.0, 0.01);
}

TEST(Synthesis, RejectsUnusableModels) {
    auto m = trained_looking_model(15);
    const Image clean = make_scene(SceneKind::composite, 16, 16, 16);
    m.iterations_trained = 0;
    EXPECT_THROW(synthesize_noisy(m, clean, 1), std::logic_error);
    m.iterations_trained = 1;
    m.raw2srgb.layers()[0].weight.data()[0] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(synthesize_noisy(m, clean, 1), NumericError);
    EXPECT_THROW(synthesize_noisy(trained_looking_model(17), Image(3, 15, 16), 1), ShapeError);
}

TEST(ElementwiseMap, FitsIdentity) {
    const Image x = random_packed(16, 16, 18);
    const auto map = fit_elementwise_map(x, x);
    const auto s = score_elementwise_map(map, x, x);
    EXPECT_GT(s.forward_psnr, 40.0);
    EXPECT_GT(s.roundtrip_psnr, 40.0);
    const std::vector<double> values{0.2, 0.5, 0.8};
    for (double d : map.derivative(0, values)) EXPECT_NEAR(d, 1.0, 0.15);
}

TEST(ElementwiseMap, FitsPerChannelMonotoneCurves) {
    const Image gt = random_packed(24, 24, 19);
    Image pseudo = gt;
    const std::array<double, 4> gamma{0.5, 0.8, 1.0, 1.6};
    for (int c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < gt.plane(); ++i) {
            float& v = pseudo.data[c * gt.plane() + i];
            v = static_cast<float>(std::pow(v, gamma[c]));
        }
    const auto map = fit_elementwise_map(gt, pseudo);
    const auto s = score_elementwise_map(map, gt, pseudo);
    EXPECT_GT(s.forward_psnr, 35.0);
    EXPECT_GT(s.roundtrip_psnr, 35.0);
    const std::vector<double> values{0.3, 0.6};
    for (int c = 0; c < 4; ++c) {
        const auto d = map.derivative(c, values);
        for (std::size_t i = 0; i < values.size(); ++i)
            EXPECT_NEAR(d[i], gamma[c] * std::pow(values[i], gamma[c] - 1), 0.15) << "channel " << c;
    }
}

TEST(ElementwiseMap, RejectsMisalignedInputs) {
    EXPECT_THROW(fit_elementwise_map(random_packed(8, 8, 1), random_packed(8, 10, 2)), ShapeError);
    EXPECT_THROW(fit_elementwise_map(Image(3, 8, 8), Image(3, 8, 8)), ShapeError);
}

TEST(ElementwiseMap, WritesPanels) {
    const Image x = random_packed(8, 8, 20);
    ElementwiseMapOptions opt;
    opt.iterations = 5;
    const auto map = fit_elementwise_map(x, x, opt);
    const auto dir = std::filesystem::temp_directory_path() / "pseudoisp_panels_test";
    std::filesystem::remove_all(dir);
    write_assumption_panels(dir, map, x, x);
    for (const char* name : {"y_raw.png", "f_of_y_gt.png", "f_inv_of_y_raw.png", "y_gt_raw.png"}) {
        ASSERT_TRUE(std::filesystem::exists(dir / name)) << name;
        const Image panel = read_png(dir / name, true);
        EXPECT_EQ(panel.height, 16);
        EXPECT_EQ(panel.width, 16);
    }
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace pseudoisp
