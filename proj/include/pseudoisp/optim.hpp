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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pseudoisp/tensor.hpp"

namespace pseudoisp {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment buffers for a fixed, ordered parameter list.
template <typename T>
class AdamState {
public:
    AdamState() = default;
    AdamState(std::span<const Tensor<T>> params, AdamOptions options) : options_(options) {
        for (const auto& p : params) {
            first_.emplace_back(p.numel(), T(0));
            second_.emplace_back(p.numel(), T(0));
        }
    }

    AdamOptions& options() { return options_; }
    const AdamOptions& options() const { return options_; }
    std::uint64_t step_count() const { return step_count_; }
    void set_learning_rate(double lr) { options_.learning_rate = lr; }

    /// Bias-corrected Adam update. Gradients are read, never cleared.
    void step(std::span<Tensor<T>> params) {
        if (params.size() != first_.size())
            throw std::invalid_argument("adam: parameter count changed since construction");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].numel() != first_[i].size())
                throw ShapeError("adam: parameter " + std::to_string(i) + " changed shape");
            if (!params[i].has_grad())
                throw std::logic_error("adam: parameter " + std::to_string(i) + " has no gradient");
        }
        ++step_count_;
        const double b1 = options_.beta1, b2 = options_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
        const T lr = static_cast<T>(options_.learning_rate);
        const T eps = static_cast<T>(options_.epsilon);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto value = params[i].data();
            auto grad = params[i].grad();
            auto& m = first_[i];
            auto& v = second_[i];
            for (std::size_t j = 0; j < value.size(); ++j) {
                const T g = grad[j];
                m[j] = static_cast<T>(b1) * m[j] + static_cast<T>(1 - b1) * g;
                v[j] = static_cast<T>(b2) * v[j] + static_cast<T>(1 - b2) * g * g;
                const T mhat = m[j] / static_cast<T>(c1);
                const T vhat = v[j] / static_cast<T>(c2);
                value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    const std::vector<std::vector<T>>& first_moment() const { return first_; }
    const std::vector<std::vector<T>>& second_moment() const { return second_; }

private:
    AdamOptions options_;
    std::vector<std::vector<T>> first_, second_;
    std::uint64_t step_count_ = 0;
};

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
    state.step(params);
}

template <typename T>
void zero_grad(std::span<Tensor<T>> params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace pseudoisp
