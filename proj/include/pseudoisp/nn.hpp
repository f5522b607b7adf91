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

#include <string>
#include <vector>

#include "pseudoisp/checkpoint.hpp"
#include "pseudoisp/ops.hpp"
#include "pseudoisp/random.hpp"

namespace pseudoisp {

enum class Activation { none, relu, softplus };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::softplus: return "softplus";
        default: return "none";
    }
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softplus") return Activation::softplus;
    if (s == "none") return Activation::none;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
    switch (a) {
        case Activation::relu: return relu(x);
        case Activation::softplus: return softplus(x);
        default: return x;
    }
}

template <typename T>
struct ConvLayer {
    Tensor<T> weight;  // [C_out, C_in/groups, k, k]
    Tensor<T> bias;    // [C_out]
    int groups = 1;
};

/// Plain stack of same-size convolutions with an activation after every
/// hidden layer and a configurable one after the last.
template <typename T>
class ConvStack {
public:
    ConvStack() = default;

    ConvStack(std::vector<int> channels, int kernel, int groups, Activation hidden, Activation output,
              Rng& rng)
        : channels_(std::move(channels)), kernel_(kernel), groups_(groups), hidden_(hidden),
          output_(output) {
        if (channels_.size() < 2) throw std::invalid_argument("ConvStack: need at least two channel counts");
        for (std::size_t i = 0; i + 1 < channels_.size(); ++i) {
            const int cin = channels_[i], cout = channels_[i + 1];
            if (cin % groups || cout % groups)
                throw ShapeError("ConvStack: groups=" + std::to_string(groups) + " must divide " +
                                 std::to_string(cin) + "->" + std::to_string(cout));
            const int fan_in = cin / groups * kernel * kernel;
            const double bound = std::sqrt(6.0 / fan_in);  // Kaiming-uniform, ReLU gain
            std::uniform_real_distribution<double> dist(-bound, bound);
            std::vector<T> w(static_cast<std::size_t>(cout) * fan_in);
            for (auto& v : w) v = static_cast<T>(dist(rng));
            ConvLayer<T> layer;
            layer.weight = Tensor<T>({cout, cin / groups, kernel, kernel}, std::move(w));
            layer.bias = Tensor<T>::zeros({cout});
            layer.weight.set_requires_grad();
            layer.bias.set_requires_grad();
            layer.groups = groups;
            layers_.push_back(std::move(layer));
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = conv2d(h, layers_[i].weight, layers_[i].bias, layers_[i].groups);
            h = activate(h, i + 1 == layers_.size() ? output_ : hidden_);
        }
        return h;
    }

    std::vector<Tensor<T>> parameters() const {
        std::vector<Tensor<T>> out;
        for (const auto& l : layers_) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.numel() + l.bias.numel();
        return n;
    }

    std::vector<ConvLayer<T>>& layers() { return layers_; }
    const std::vector<ConvLayer<T>>& layers() const { return layers_; }
    const std::vector<int>& channels() const { return channels_; }
    int kernel() const { return kernel_; }
    int groups() const { return groups_; }
    Activation hidden_activation() const { return hidden_; }
    Activation output_activation() const { return output_; }
    void set_output_activation(Activation a) { output_ = a; }

    void zero_output_layer() {
        auto& last = layers_.back();
        for (auto& v : last.weight.data()) v = T(0);
        for (auto& v : last.bias.data()) v = T(0);
    }

    bool all_finite() const {
        for (const auto& l : layers_)
            if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
        return true;
    }

    ConvStack clone() const {
        ConvStack c = *this;
        for (auto& l : c.layers_) {
            l.weight = l.weight.clone().set_requires_grad();
            l.bias = l.bias.clone().set_requires_grad();
        }
        return c;
    }

    template <typename U>
    ConvStack<U> cast() const {
        ConvStack<U> c;
        c.channels_ = channels_;
        c.kernel_ = kernel_;
        c.groups_ = groups_;
        c.hidden_ = hidden_;
        c.output_ = output_;
        for (const auto& l : layers_) {
            ConvLayer<U> m;
            m.weight = l.weight.template cast<U>().set_requires_grad();
            m.bias = l.bias.template cast<U>().set_requires_grad();
            m.groups = l.groups;
            c.layers_.push_back(std::move(m));
        }
        return c;
    }

    nlohmann::json describe() const {
        return {{"channels", channels_},
                {"kernel", kernel_},
                {"groups", groups_},
                {"hidden_activation", to_string(hidden_)},
                {"output_activation", to_string(output_)}};
    }

    void save(Checkpoint& ckpt, const std::string& prefix) const {
        ckpt.metadata["nets"][prefix] = describe();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            ckpt.put(prefix + "." + std::to_string(i) + ".weight", layers_[i].weight);
            ckpt.put(prefix + "." + std::to_string(i) + ".bias", layers_[i].bias);
        }
    }

    static ConvStack load(const Checkpoint& ckpt, const std::string& prefix) {
        if (!ckpt.metadata.contains("nets") || !ckpt.metadata["nets"].contains(prefix))
            throw CheckpointError("checkpoint has no network '" + prefix + "'");
        const auto& d = ckpt.metadata["nets"][prefix];
        ConvStack s;
        s.channels_ = d.at("channels").get<std::vector<int>>();
        s.kernel_ = d.at("kernel").get<int>();
        s.groups_ = d.at("groups").get<int>();
        s.hidden_ = activation_from_string(d.at("hidden_activation").get<std::string>());
        s.output_ = activation_from_string(d.at("output_activation").get<std::string>());
        for (std::size_t i = 0; i + 1 < s.channels_.size(); ++i) {
            ConvLayer<T> l;
            l.weight = ckpt.tensor<T>(prefix + "." + std::to_string(i) + ".weight").set_requires_grad();
            l.bias = ckpt.tensor<T>(prefix + "." + std::to_string(i) + ".bias").set_requires_grad();
            l.groups = s.groups_;
            const Shape expect{s.channels_[i + 1], s.channels_[i] / s.groups_, s.kernel_, s.kernel_};
            if (l.weight.shape() != expect)
                throw CheckpointError("checkpoint: layer " + prefix + "." + std::to_string(i) +
                                      " has shape " + to_string(l.weight.shape()) + ", expected " +
                                      to_string(expect));
            s.layers_.push_back(std::move(l));
        }
        return s;
    }

private:
    template <typename U>
    friend class ConvStack;

    std::vector<int> channels_;
    int kernel_ = 3;
    int groups_ = 1;
    Activation hidden_ = Activation::relu;
    Activation output_ = Activation::none;
    std::vector<ConvLayer<T>> layers_;
};

/// Channel list {in, width x (depth-1), out} for a depth-layer stack.
inline std::vector<int> stack_channels(int in, int width, int out, int depth) {
    std::vector<int> c{in};
    for (int i = 0; i + 1 < depth; ++i) c.push_back(width);
    c.push_back(out);
    return c;
}

}  // namespace pseudoisp
