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
#include <sstream>

#include "pseudoisp/camera_sim.hpp"
#include "pseudoisp/metrics.hpp"
#include "pseudoisp/scenes.hpp"

namespace pseudoisp {
namespace {

namespace fs = std::filesystem;

Image constant_scene(int h, int w, std::array<float, 3> rgb) {
    Image img(3, h, w);
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < img.plane(); ++i) img.data[c * img.plane() + i] = rgb[c];
    return img;
}

RawImage constant_raw(int h, int w, float v) {
    RawImage r = make_raw(h, w);
    std::fill(r.mosaic.data.begin(), r.mosaic.data.end(), v);
    return r;
}

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("pseudoisp_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

TEST(CameraProfile, ValidatesInvariants) {
    CameraProfile p = CameraProfile::reference();
    EXPECT_NO_THROW(p.validate());
    p.nlf.b[1] = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = CameraProfile::reference();
    p.color_mix = {{{1, 1, 0}, {1, 1, 0}, {0, 0, 1}}};
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = CameraProfile::reference();
    p.tone_gamma[2] = -1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(CameraProfile, JsonRoundTrip) {
    CameraProfile p = CameraProfile::reference();
    p.nlf.a = {0.01, 0.02, 0.03};
    p.seed = 9;
    const auto q = CameraProfile::from_json(p.to_json());
    EXPECT_EQ(q.to_json(), p.to_json());
}

TEST(ToneCurve, InverseComposesToIdentity) {
    const CameraProfile p = CameraProfile::reference();
    for (int c = 0; c < 3; ++c)
        for (double x = 0.01; x <= 1.0; x += 0.001) {
            EXPECT_NEAR(p.tone(c, p.inverse_tone(c, x)), x, 1e-6);
            EXPECT_NEAR(p.inverse_tone(c, p.tone(c, x)), x, 1e-6);
        }
}

TEST(ToneCurve, StrictlyIncreasing) {
    const CameraProfile p = CameraProfile::reference();
    for (int c = 0; c < 3; ++c)
        for (double x = 0.001; x < 1.0; x += 0.001) EXPECT_LT(p.tone(c, x), p.tone(c, x + 0.001));
}

TEST(RenderCleanRaw, IdentityProfileGray) {
    const auto raw = render_clean_raw(CameraProfile::identity(), constant_scene(4, 6, {0.5f, 0.5f, 0.5f}));
    for (float v : raw.mosaic.data) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(RenderCleanRaw, PureRedOnlyAtRedSites) {
    const auto raw = render_clean_raw(CameraProfile::identity(), constant_scene(4, 4, {0.8f, 0.0f, 0.0f}));
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            if (rggb_color(y, x) == 0)
                EXPECT_GT(raw.at(y, x), 0.0f);
            else
                EXPECT_EQ(raw.at(y, x), 0.0f);
        }
}

TEST(RenderCleanRaw, OddDimsRejected) {
    EXPECT_THROW(render_clean_raw(CameraProfile::identity(), constant_scene(3, 4, {0.5f, 0.5f, 0.5f})), ShapeError);
}

TEST(Develop, IdentityProfileConstant) {
    const auto img = develop(CameraProfile::identity(), constant_raw(6, 6, 0.5f));
    for (float v : img.data) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Develop, GammaClosedForm) {
    CameraProfile p = CameraProfile::identity();
    p.tone_gamma = {1 / 2.2, 1 / 2.2, 1 / 2.2};
    const auto img = develop(p, constant_raw(6, 6, 0.25f));
    for (float v : img.data) EXPECT_NEAR(v, std::pow(0.25, 1 / 2.2), 1e-6);
    EXPECT_NEAR(img.data[0], 0.5326, 1e-4);
}

TEST(Develop, MonotoneInRaw) {
    const CameraProfile p = CameraProfile::identity();  // non-negative mix keeps order
    Rng rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f), step(0.0f, 0.2f);
    for (int trial = 0; trial < 50; ++trial) {
        RawImage a = make_raw(8, 8), b = make_raw(8, 8);
        for (std::size_t i = 0; i < a.mosaic.data.size(); ++i) {
            a.mosaic.data[i] = u(rng);
            b.mosaic.data[i] = a.mosaic.data[i] + step(rng);
        }
        const auto da = develop(p, a), db = develop(p, b);
        for (std::size_t i = 0; i < da.data.size(); ++i) EXPECT_LE(da.data[i], db.data[i]);
    }
    // Same property for the reference camera, whose mix has positive entries.
    const CameraProfile ref = CameraProfile::reference();
    RawImage a = make_raw(8, 8), b = make_raw(8, 8);
    for (std::size_t i = 0; i < a.mosaic.data.size(); ++i) {
        a.mosaic.data[i] = u(rng);
        b.mosaic.data[i] = a.mosaic.data[i] + step(rng);
    }
    const auto da = develop(ref, a), db = develop(ref, b);
    for (std::size_t i = 0; i < da.data.size(); ++i) EXPECT_LE(da.data[i], db.data[i]);
}

TEST(Develop, InvertsRenderOnSmoothScenes) {
    const CameraProfile p = CameraProfile::reference();
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Image scene = make_smooth_scene(96, 96, seed);
        const Image back = develop(p, render_clean_raw(p, scene));
        EXPECT_GT(psnr(back, scene), 45.0) << "seed " << seed;
    }
}

TEST(AddRawNoise, ZeroNlfIsIdentity) {
    NoiseLevelFunction nlf;  // a = b = 0
    const auto clean = render_clean_raw(CameraProfile::reference(), make_scene(SceneKind::blobs, 16, 16, 1));
    EXPECT_EQ(add_raw_noise(nlf, clean, 5).mosaic, clean.mosaic);
}

TEST(AddRawNoise, MonteCarloStd) {
    NoiseLevelFunction nlf{{0.01, 0.01, 0.01}, {4e-4, 4e-4, 4e-4}};
    const auto clean = constant_raw(1000, 1000, 0.25f);
    const auto noisy = add_raw_noise(nlf, clean, 11);
    double s = 0, s2 = 0;
    const double n = static_cast<double>(noisy.mosaic.data.size());
    for (float v : noisy.mosaic.data) {
        const double r = v - 0.25;
        s += r;
        s2 += r * r;
    }
    const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
    EXPECT_NEAR(sd, std::sqrt(0.0029), 0.005 * std::sqrt(0.0029));
    EXPECT_LT(std::abs(mean), 3 * std::sqrt(0.0029) / std::sqrt(n));  // zero mean
}

TEST(AddRawNoise, NeighboursUncorrelated) {
    NoiseLevelFunction nlf{{0.02, 0.02, 0.02}, {1e-3, 1e-3, 1e-3}};
    const auto clean = constant_raw(1000, 1002, 0.4f);
    const auto noisy = add_raw_noise(nlf, clean, 12);
    double sxy = 0, sxx = 0, syy = 0;
    for (int y = 0; y < 1000; ++y)
        for (int x = 0; x + 1 < 1002; x += 2) {
            const double a = noisy.at(y, x) - 0.4, b = noisy.at(y, x + 1) - 0.4;
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
    EXPECT_LT(std::abs(sxy / std::sqrt(sxx * syy)), 0.01);
}

TEST(AddRawNoise, NoClipping) {
    NoiseLevelFunction nlf{{0.0, 0.0, 0.0}, {0.04, 0.04, 0.04}};
    const auto noisy = add_raw_noise(nlf, constant_raw(64, 64, 0.02f), 3);
    EXPECT_LT(*std::min_element(noisy.mosaic.data.begin(), noisy.mosaic.data.end()), 0.0f);
}

TEST(Dataset, TwoScenesPartition) {
    const auto scenes = make_scene_set(2, 16, 16, 1);
    const auto ds = simulate_dataset(CameraProfile::reference(), scenes, {}, 3);
    ASSERT_EQ(ds.noisy.size(), 1u);
    ASSERT_EQ(ds.clean.size(), 1u);
    EXPECT_NE(ds.noisy[0].id, ds.clean[0].id);
    EXPECT_THROW(simulate_dataset(CameraProfile::reference(), {scenes[0]}, {}, 3), std::invalid_argument);
}

TEST(Dataset, SameSeedByteIdenticalFiles) {
    const auto scenes = make_scene_set(4, 16, 16, 2);
    const auto a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
    generate_dataset(CameraProfile::reference(), scenes, a, {}, 7);
    generate_dataset(CameraProfile::reference(), scenes, b, {}, 7);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
        ++files;
    }
    EXPECT_GE(files, 6u);  // 2 noisy + 2 clean + oracle + manifest
}

TEST(Dataset, ManifestRolesAndReload) {
    const auto scenes = make_scene_set(5, 16, 16, 3);
    const auto dir = scratch_dir("ds_roles");
    const auto manifest = generate_dataset(CameraProfile::reference(), scenes, dir, {2, 1}, 5);
    EXPECT_EQ(manifest["schema_version"], 1);
    std::set<std::string> roles;
    for (const auto& e : manifest["entries"]) roles.insert(e["role"].get<std::string>());
    EXPECT_EQ(roles, (std::set<std::string>{"noisy", "clean", "oracle"}));
    const auto ds = load_dataset(dir);
    EXPECT_EQ(ds.noisy.size(), 2u);
    EXPECT_EQ(ds.heldout.size(), 1u);
    EXPECT_EQ(ds.clean.size(), 2u);
    const auto mem = simulate_dataset(CameraProfile::reference(), scenes, {2, 1}, 5);
    EXPECT_EQ(ds.noisy[0].noisy_raw.mosaic, mem.noisy[0].noisy_raw.mosaic);
    EXPECT_GT(psnr(ds.noisy[0].srgb, mem.noisy[0].srgb), 80.0);  // 16-bit quantisation only
}

TEST(Dataset, IoErrorsCarryPath) {
    try {
        load_dataset("/nonexistent/pseudoisp/dir");
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/pseudoisp/dir"), std::string::npos);
    }
}

// Demosaicking spreads independent raw noise to neighbours.
TEST(Dataset, SrgbNoiseIsSpatiallyCorrelated) {
    const auto scenes = make_scene_set(2, 96, 96, 4);
    const auto ds = simulate_dataset(CameraProfile::reference(), scenes, {}, 9);
    const auto& s = ds.noisy[0];
    double sxy = 0, sxx = 0, syy = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s.srgb.height; ++y)
            for (int x = 0; x + 1 < s.srgb.width; ++x) {
                const double a = s.srgb.at(c, y, x) - s.clean_srgb.at(c, y, x);
                const double b = s.srgb.at(c, y, x + 1) - s.clean_srgb.at(c, y, x + 1);
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
    EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.1);
}

}  // namespace
}  // namespace pseudoisp
