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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pseudoisp {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() { return detail::grad_mode; }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
    ~NoGradGuard() { detail::grad_mode = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulated into
    bool requires_grad = false;
    bool is_leaf = true;
    bool freed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

/// Shared handle to a dense row-major array that may take part in a recorded
/// computation graph. Copies alias the same storage; use clone() for a deep copy.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
        if (pseudoisp::numel(shape) != values.size())
            throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                             std::to_string(pseudoisp::numel(shape)) + " values, got " +
                             std::to_string(values.size()));
        for (int d : shape)
            if (d <= 0) throw ShapeError("tensor: non-positive extent in " + to_string(shape));
        node_->shape = std::move(shape);
        node_->data = std::move(values);
    }

    static Tensor zeros(Shape shape) {
        auto n = pseudoisp::numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)));
    }
    static Tensor full(Shape shape, T value) {
        auto n = pseudoisp::numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, value));
    }
    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<T> data() { return node_->data; }
    std::span<const T> data() const { return node_->data; }
    const std::vector<T>& values() const { return node_->data; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<T> grad() { return node_->grad; }
    std::span<const T> grad() const { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        if (!node_->is_leaf) throw std::logic_error("requires_grad can only be set on leaf tensors");
        node_->requires_grad = on;
        return *this;
    }
    bool is_leaf() const { return node_->is_leaf; }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
        return node_->data[0];
    }

    Tensor detach() const { return Tensor(node_->shape, node_->data); }
    Tensor clone() const { return detach(); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(node_->data.begin(), node_->data.end());
        return Tensor<U>(node_->shape, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(node_->data.begin(), node_->data.end(),
                           [](T v) { return std::isfinite(v); });
    }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

    static Tensor from_node(std::shared_ptr<Node<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

/// Wraps freshly computed values into a tensor and records the backward
/// closure when any input participates in gradient computation.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs, BackwardFn<T> fn) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    bool needs = false;
    if (grad_enabled())
        for (auto* in : inputs) needs = needs || in->requires_grad();
    if (needs) {
        node->requires_grad = true;
        node->is_leaf = false;
        for (auto* in : inputs) node->parents.push_back(in->node());
        node->backward_fn = std::move(fn);
    }
    return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      BackwardFn<T> fn) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    bool needs = false;
    if (grad_enabled())
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        node->requires_grad = true;
        node->is_leaf = false;
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(fn);
    }
    return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F forward, D derivative) {
    std::vector<T> out(a.numel());
    auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
    return make_result<T>(a.shape(), std::move(out), {&a}, [derivative](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            p.grad[i] += self.grad[i] * derivative(p.data[i], self.data[i]);
    });
}

}  // namespace detail

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// the recorded graph behind `loss` is released afterwards.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward: loss must be a scalar, got " +
                         (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) throw std::logic_error("backward: loss does not require grad");
    if (loss.node()->freed) throw std::logic_error("backward: graph already released");

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node<T>* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    Node<T>* root = loss.node().get();
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
    for (Node<T>* n : order) {
        if (n->is_leaf) continue;
        n->backward_fn = nullptr;
        n->parents.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->freed = true;
    }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return detail::unary<T>(
        a, [factor](T x) { return factor * x; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return detail::unary<T>(
        a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    for (T v : a.data())
        if (v < T(0)) throw NumericError("sqrt: negative input");
    return detail::unary<T>(
        a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return detail::unary<T>(
        a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return detail::unary<T>(
        a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

/// log(1 + e^x), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    return detail::unary<T>(
        a,
        [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](T x, T) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T total = 0;
    for (T v : a.data()) total += v;
    return detail::make_result<T>({1}, {total}, {&a}, [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (auto& g : p.grad) g += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Mean of squared elementwise differences.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mse_loss");
    const auto n = a.numel();
    auto x = a.data(), y = b.data();
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        T d = x[i] - y[i];
        total += d * d;
    }
    return detail::make_result<T>({1}, {total / static_cast<T>(n)}, {&a, &b}, [n](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T k = T(2) * self.grad[0] / static_cast<T>(n);
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) pa.grad[i] += k * (pa.data[i] - pb.data[i]);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) pb.grad[i] -= k * (pa.data[i] - pb.data[i]);
        }
    });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace pseudoisp
