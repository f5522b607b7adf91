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

#include "pseudoisp/nn.hpp"
#include "pseudoisp/optim.hpp"
#include "support/gradcheck.hpp"

namespace pseudoisp {
namespace {

using testing::gradcheck;
using testing::random_leaf;
using testing::random_leaf_away_from_zero;

constexpr double kGradTol = 1e-4;
constexpr int kGradTrials = 20;

TEST(Tensor, ShapeMustMatchData) {
    EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(Tensor<double>({0, 3}, {}), ShapeError);
    Tensor<double> t({2, 3}, std::vector<double>(6, 1.0));
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(numel(t.shape()), t.numel());
}

TEST(Tensor, GradHasDataShape) {
    auto a = Tensor<double>::full({2, 2}, 3.0).set_requires_grad();
    backward(sum(square(a)));
    ASSERT_TRUE(a.has_grad());
    EXPECT_EQ(a.grad().size(), a.numel());
    for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 6.0);
}

// ---------------------------------------------------------------------------
// conv2d

TEST(Conv2d, OnesKernelCountsNeighbours) {
    auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto b = Tensor<double>::zeros({1});
    auto y = conv2d(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
    EXPECT_DOUBLE_EQ(y.data()[4], 9.0);
    for (int corner : {0, 2, 6, 8}) EXPECT_DOUBLE_EQ(y.data()[corner], 4.0);
    for (int edge : {1, 3, 5, 7}) EXPECT_DOUBLE_EQ(y.data()[edge], 6.0);
}

TEST(Conv2d, IdentityPointwiseKernel) {
    std::mt19937_64 rng(1);
    auto x = random_leaf({2, 4, 5, 5}, rng);
    std::vector<double> wv(4, 1.0);
    auto w = Tensor<double>({4, 1, 1, 1}, wv);
    auto y = conv2d(x, w, Tensor<double>::zeros({4}), 4);
    EXPECT_EQ(y.values(), x.values());

    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    auto y1 = conv2d(x, Tensor<double>({4, 4, 1, 1}, eye), Tensor<double>::zeros({4}));
    EXPECT_EQ(y1.values(), x.values());
}

TEST(Conv2d, GroupedPointwiseIsChannelPure) {
    std::mt19937_64 rng(2);
    auto x = random_leaf({1, 4, 6, 6}, rng);
    auto w = random_leaf({4, 1, 1, 1}, rng);
    auto b = random_leaf({4}, rng);
    const auto base = conv2d(x, w, b, 4).values();
    for (int c = 0; c < 4; ++c) {
        auto xp = x.clone();
        for (int i = 0; i < 36; ++i) xp.data()[c * 36 + i] += 0.5;
        const auto out = conv2d(xp, w, b, 4).values();
        for (int oc = 0; oc < 4; ++oc)
            for (int i = 0; i < 36; ++i) {
                if (oc == c) continue;
                EXPECT_EQ(out[oc * 36 + i], base[oc * 36 + i]) << "channel " << oc << " moved with " << c;
            }
    }
}

TEST(Conv2d, PointwiseOutputDependsOnlyOnSamePixel) {
    std::mt19937_64 rng(3);
    Rng net_rng(4);
    ConvStack<double> net({4, 8, 8, 4}, 1, 4, Activation::relu, Activation::softplus, net_rng);
    auto x = random_leaf({1, 4, 5, 5}, rng);
    const auto base = net.forward(x).values();
    auto xp = x.clone();
    xp.data()[1 * 25 + 12] += 0.3;  // channel 1, pixel (2, 2)
    const auto out = net.forward(xp).values();
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 25; ++i)
            if (!(c == 1 && i == 12)) EXPECT_EQ(out[c * 25 + i], base[c * 25 + i]);
}

TEST(Conv2d, DescriptiveShapeErrors) {
    auto x = Tensor<double>::zeros({1, 3, 4, 4});
    EXPECT_THROW(conv2d(x, Tensor<double>::zeros({4, 3, 3, 3}), Tensor<double>::zeros({4}), 2), ShapeError);
    EXPECT_THROW(conv2d(x, Tensor<double>::zeros({4, 2, 3, 3}), Tensor<double>::zeros({4})), ShapeError);
    EXPECT_THROW(conv2d(x, Tensor<double>::zeros({4, 3, 3, 3}), Tensor<double>::zeros({5})), ShapeError);
    EXPECT_THROW(conv2d(x, Tensor<double>::zeros({4, 3, 2, 2}), Tensor<double>::zeros({4})), ShapeError);
    try {
        conv2d(x, Tensor<double>::zeros({4, 2, 3, 3}), Tensor<double>::zeros({4}));
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("input channels"), std::string::npos);
    }
}

TEST(Conv2d, Gradcheck) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < kGradTrials; ++trial) {
        const int k = trial % 2 ? 3 : 1;
        const int groups = trial % 4 < 2 ? 1 : 2;
        auto x = random_leaf({2, 4, 5, 4}, rng);
        auto w = random_leaf({6, 4 / groups, k, k}, rng);
        auto b = random_leaf({6}, rng);
        auto r = gradcheck([&] { return sum(square(conv2d(x, w, b, groups))); }, {x, w, b});
        EXPECT_LT(r.max_rel_error, kGradTol) << "trial " << trial;
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops

TEST(Relu, Definition) {
    Tensor<double> x({3}, {-1.0, 0.0, 2.0});
    EXPECT_EQ(relu(x).values(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Relu, NegativeInputHasZeroGradient) {
    auto x = Tensor<double>::full({2, 3}, -0.5).set_requires_grad();
    auto y = relu(x);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
    backward(sum(y));
    for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Relu, PositiveEntriesPassUpstreamGradient) {
    std::mt19937_64 rng(6);
    auto x = random_leaf({10}, rng, 0.1, 1.0);
    auto c = random_leaf({10}, rng);
    backward(sum(mul(relu(x), c.detach())));
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(x.grad()[i], c.data()[i]);
}

TEST(MseLoss, Values) {
    Tensor<double> a({2}, {0.0, 0.0}), b({2}, {1.0, 3.0});
    EXPECT_DOUBLE_EQ(mse_loss(a, b).item(), 5.0);
    EXPECT_DOUBLE_EQ(mse_loss(a, a).item(), 0.0);
    EXPECT_THROW(mse_loss(a, Tensor<double>::zeros({3})), ShapeError);
}

TEST(MseLoss, GradientIsTwiceResidualOverN) {
    std::mt19937_64 rng(7);
    auto a = random_leaf({3, 4}, rng);
    auto b = random_leaf({3, 4}, rng);
    backward(mse_loss(a, b));
    for (std::size_t i = 0; i < a.numel(); ++i)
        EXPECT_NEAR(a.grad()[i], 2.0 * (a.data()[i] - b.data()[i]) / 12.0, 1e-15);
    auto r = gradcheck([&] { return mse_loss(a, b); }, {a, b});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Backward, ScalarWeightHandDerivative) {
    const double x = 1.5, y = 0.25, w0 = 0.7;
    auto w = Tensor<double>::scalar(w0).set_requires_grad();
    backward(mse_loss(scale(w, x), Tensor<double>::scalar(y)));
    EXPECT_NEAR(w.grad()[0], 2 * x * (w0 * x - y), 1e-14);
}

TEST(Backward, DisconnectedLeafStaysZero) {
    auto a = Tensor<double>::full({2}, 1.0).set_requires_grad();
    auto unused = Tensor<double>::full({2}, 1.0).set_requires_grad();
    unused.grad();  // untouched
    backward(sum(square(a)));
    for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
    auto a = Tensor<double>::full({2}, 1.0).set_requires_grad();
    backward(sum(scale(a, 3.0)));
    backward(sum(scale(a, 3.0)));
    for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 6.0);
    a.zero_grad();
    for (double g : a.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
    auto a = Tensor<double>::full({2}, 1.0).set_requires_grad();
    EXPECT_THROW(backward(scale(a, 2.0)), ShapeError);
}

TEST(Backward, ReusedSubexpressionSumsPaths) {
    auto a = Tensor<double>::scalar(2.0).set_requires_grad();
    auto b = mul(a, a);
    backward(sum(add(b, b)));  // d/da 2a^2 = 4a
    EXPECT_DOUBLE_EQ(a.grad()[0], 8.0);
}

TEST(Sqrt, RejectsNegativeInput) {
    EXPECT_THROW(sqrt(Tensor<double>({1}, {-1.0})), NumericError);
}

// Every primitive against central differences on >= 20 random tensors.
TEST(Gradcheck, AllPrimitives) {
    std::mt19937_64 rng(8);
    const Shape s{2, 3, 4, 4};
    for (int trial = 0; trial < kGradTrials; ++trial) {
        auto a = random_leaf_away_from_zero(s, rng);
        auto b = random_leaf_away_from_zero(s, rng);
        auto pos = random_leaf(s, rng, 0.2, 2.0);
        struct Case {
            const char* name;
            std::function<Tensor<double>()> f;
            std::vector<Tensor<double>> in;
        };
        const std::vector<Case> cases{
            {"add", [&] { return sum(square(add(a, b))); }, {a, b}},
            {"sub", [&] { return sum(square(sub(a, b))); }, {a, b}},
            {"mul", [&] { return sum(mul(a, b)); }, {a, b}},
            {"scale", [&] { return sum(square(scale(a, -1.7))); }, {a}},
            {"abs", [&] { return sum(mul(abs(a), b)); }, {a, b}},
            {"sqrt", [&] { return sum(mul(sqrt(pos), b)); }, {pos, b}},
            {"square", [&] { return sum(mul(square(a), b)); }, {a, b}},
            {"relu", [&] { return sum(mul(relu(a), b)); }, {a, b}},
            {"softplus", [&] { return sum(mul(softplus(a), b)); }, {a, b}},
            {"mean", [&] { return mean(mul(a, b)); }, {a, b}},
            {"mse", [&] { return mse_loss(a, b); }, {a, b}},
            {"concat", [&] { return sum(square(concat_channels(std::vector{a, b}))); }, {a, b}},
            {"crop", [&] { return sum(mul(crop(a, 1, 1, 2, 3), crop(b, 0, 1, 2, 3))); }, {a, b}},
        };
        for (const auto& c : cases) {
            auto r = gradcheck(c.f, c.in);
            EXPECT_LT(r.max_rel_error, kGradTol) << c.name << " trial " << trial;
        }
    }
}

TEST(Crop, SelectsWindowAndValidatesBounds) {
    std::vector<double> v(16);
    std::iota(v.begin(), v.end(), 0.0);
    Tensor<double> x({1, 1, 4, 4}, v);
    auto c = crop(x, 1, 2, 2, 2);
    EXPECT_EQ(c.values(), (std::vector<double>{6, 7, 10, 11}));
    EXPECT_THROW(crop(x, 3, 0, 2, 2), ShapeError);
}

TEST(ConcatChannels, StacksAlongChannelAxis) {
    auto a = Tensor<double>::full({1, 1, 2, 2}, 1.0);
    auto b = Tensor<double>::full({1, 2, 2, 2}, 2.0);
    auto c = concat_channels(std::vector{a, b});
    ASSERT_EQ(c.shape(), (Shape{1, 3, 2, 2}));
    EXPECT_EQ(c.data()[0], 1.0);
    EXPECT_EQ(c.data()[4], 2.0);
    EXPECT_THROW(concat_channels(std::vector{a, Tensor<double>::zeros({1, 1, 3, 2})}), ShapeError);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParameters) {
    auto p = Tensor<double>::full({3}, 0.5).set_requires_grad();
    std::vector<Tensor<double>> params{p};
    AdamState<double> s(params, AdamOptions{0.1});
    backward(sum(scale(p, 0.0)));
    adam_step<double>(params, s);
    for (double v : p.values()) EXPECT_EQ(v, 0.5);
    EXPECT_EQ(s.step_count(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    auto p = Tensor<double>::scalar(1.0).set_requires_grad();
    std::vector<Tensor<double>> params{p};
    AdamState<double> s(params, AdamOptions{0.1});
    backward(sum(p));  // g = 1
    adam_step<double>(params, s);
    EXPECT_NEAR(p.item(), 0.9, 1e-6);
}

TEST(Adam, ConvergesOnQuadratic) {
    auto w = Tensor<double>::scalar(0.0).set_requires_grad();
    std::vector<Tensor<double>> params{w};
    AdamState<double> s(params, AdamOptions{0.1});
    for (int i = 0; i < 100; ++i) {
        zero_grad<double>(params);
        backward(square(sub(w, Tensor<double>::scalar(3.0))));
        adam_step<double>(params, s);
        EXPECT_EQ(s.step_count(), static_cast<std::uint64_t>(i + 1));
    }
    EXPECT_LT(std::abs(w.item() - 3.0), 0.05);
}

TEST(Adam, MissingGradientIsAnError) {
    auto p = Tensor<double>::scalar(1.0).set_requires_grad();
    std::vector<Tensor<double>> params{p};
    AdamState<double> s(params, AdamOptions{});
    EXPECT_THROW(adam_step<double>(params, s), std::logic_error);
}

TEST(Adam, MomentBuffersMatchParameterShapes) {
    auto a = Tensor<double>::zeros({2, 3}).set_requires_grad();
    auto b = Tensor<double>::zeros({5}).set_requires_grad();
    std::vector<Tensor<double>> params{a, b};
    AdamState<double> s(params, AdamOptions{});
    ASSERT_EQ(s.first_moment().size(), 2u);
    EXPECT_EQ(s.first_moment()[0].size(), 6u);
    EXPECT_EQ(s.second_moment()[1].size(), 5u);
}

TEST(Determinism, SameSeedSameForwardAndGradients) {
    auto run = [] {
        Rng rng(42);
        ConvStack<float> net({3, 8, 3}, 3, 1, Activation::relu, Activation::none, rng);
        std::vector<float> v(3 * 8 * 8);
        std::normal_distribution<float> n;
        for (auto& x : v) x = n(rng);
        Tensor<float> x({1, 3, 8, 8}, v);
        auto loss = mean(square(net.forward(x)));
        backward(loss);
        std::vector<float> g(net.parameters()[0].grad().begin(), net.parameters()[0].grad().end());
        return std::make_pair(loss.item(), g);
    };
    EXPECT_EQ(run(), run());
}

TEST(NoGradGuard, SkipsGraphConstruction) {
    auto a = Tensor<double>::scalar(1.0).set_requires_grad();
    NoGradGuard guard;
    auto b = scale(a, 2.0);
    EXPECT_FALSE(b.requires_grad());
}

}  // namespace
}  // namespace pseudoisp
