// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mfn::tensor {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Mode { training, inference };

template <typename T>
struct TensorImpl;

/// Backward closure recorded for a non-leaf tensor. `backward` receives the
/// gradient of the output and accumulates into the inputs' grad buffers.
template <typename T>
struct GradNode {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::function<void(std::span<const T> grad_out)> backward;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<GradNode<T>> node;

    /// Returns the grad buffer, allocating zeros on first use.
    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(values.size(), T(0));
        return grad;
    }
};

/// Shared handle to a dense row-major array participating in the autodiff graph.
/// Copies alias the same storage; use clone() for a deep copy.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, T value, bool requires_grad = false);
    static BasicTensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false);

    bool defined() const noexcept { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }

    std::span<T> values() { return impl_->values; }
    std::span<const T> values() const { return impl_->values; }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> mutable_grad() { return impl_->grad_buffer(); }
    void zero_grad() { impl_->grad.clear(); }

    bool is_leaf() const { return impl_->node == nullptr; }

    /// Deep copy of values only; the copy is a leaf with the same requires_grad flag.
    BasicTensor clone() const;
    /// Shares nothing with the graph: a new leaf holding a copy of the values.
    BasicTensor detach() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
    explicit BasicTensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// When enabled (the default), every op output is scanned and NaN/Inf raises NumericError.
void set_finite_checks(bool enabled);
bool finite_checks();

/// Reverse-mode sweep from a single-element tensor. Gradients accumulate (sum)
/// into every reachable tensor with requires_grad set.
template <typename T>
void backward(const BasicTensor<T>& loss);

} // namespace mfn::tensor
