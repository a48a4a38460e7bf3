// SPDX-License-Identifier: Apache-2.0
#include "mfn/tensor/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

#include "mfn/common/errors.hpp"

namespace mfn::tensor {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<bool> g_finite_checks{true};
} // namespace

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto extent : shape) {
        if (extent < 0) throw ConfigError("negative extent in shape " + to_string(shape));
        n *= extent;
    }
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks() { return g_finite_checks.load(); }

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->values.assign(static_cast<std::size_t>(tensor::numel(shape)), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return BasicTensor(std::move(impl));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_values(Shape shape, std::vector<T> values, bool requires_grad) {
    if (tensor::numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ConfigError("shape " + to_string(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return BasicTensor(std::move(impl));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
    return full({}, value, requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
    if (impl_->values.size() != 1) {
        throw ConfigError("item() on tensor of shape " + to_string(impl_->shape));
    }
    return impl_->values.front();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
    return from_values(impl_->shape, impl_->values, impl_->requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return from_values(impl_->shape, impl_->values, false);
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ConfigError("backward() needs a single-element loss");
    }
    using ImplPtr = std::shared_ptr<TensorImpl<T>>;

    // Iterative post-order DFS; reverse of the post-order is a topological order.
    std::vector<ImplPtr> order;
    std::unordered_set<const TensorImpl<T>*> visited;
    std::unordered_set<const TensorImpl<T>*> on_stack;
    struct Frame {
        ImplPtr impl;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.impl(), 0});
    visited.insert(loss.impl().get());
    on_stack.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& frame = stack.back();
        const auto& node = frame.impl->node;
        if (node && frame.next_input < node->inputs.size()) {
            ImplPtr child = node->inputs[frame.next_input++];
            if (!child || !child->requires_grad) continue;
            if (on_stack.count(child.get())) throw std::logic_error("cycle in autodiff graph");
            if (visited.insert(child.get()).second) {
                on_stack.insert(child.get());
                stack.push_back({std::move(child), 0});
            }
            continue;
        }
        on_stack.erase(frame.impl.get());
        order.push_back(std::move(frame.impl));
        stack.pop_back();
    }

    loss.impl()->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& impl = *it;
        if (!impl->node || impl->grad.empty()) continue;
        impl->node->backward(impl->grad);
    }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

} // namespace mfn::tensor
