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

// Central-difference gradient checking for float64 graphs.

#include <functional>
#include <random>

#include "pseudoisp/tensor.hpp"

namespace pseudoisp::testing {

struct GradcheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps entries with
/// vanishing gradients from dominating.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares d(loss)/d(input) from backward() against central differences for
/// every entry of every input (or `max_entries` evenly spaced entries per input).
inline GradcheckResult gradcheck(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> inputs,
                                 double h = 1e-5, std::size_t max_entries = 0) {
    for (auto& t : inputs) t.zero_grad();
    auto loss = loss_fn();
    backward(loss);
    GradcheckResult r;
    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        const std::size_t n = t.numel();
        const std::size_t stride = max_entries && n > max_entries ? n / max_entries : 1;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = t.data()[i];
            double plus, minus;
            {
                NoGradGuard guard;
                t.data()[i] = orig + h;
                plus = loss_fn().item();
                t.data()[i] = orig - h;
                minus = loss_fn().item();
                t.data()[i] = orig;
            }
            const double numeric = (plus - minus) / (2 * h);
            r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[i], numeric));
            r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[i] - numeric));
            ++r.checked;
        }
    }
    return r;
}

/// Leaf tensor with entries uniform in [lo, hi].
inline Tensor<double> random_leaf(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = u(rng);
    Tensor<double> t(shape, std::move(v));
    t.set_requires_grad();
    return t;
}

/// Like random_leaf but keeps every entry at least `gap` away from zero, so
/// kinks of relu/abs are not straddled by the finite-difference step.
inline Tensor<double> random_leaf_away_from_zero(const Shape& shape, std::mt19937_64& rng, double gap = 0.05) {
    std::uniform_real_distribution<double> u(gap, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
    Tensor<double> t(shape, std::move(v));
    t.set_requires_grad();
    return t;
}

}  // namespace pseudoisp::testing
