// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "mfn/tensor/tensor.hpp"

namespace mfn::tensor {

/// Weights and geometry of a 3D convolution. Kernel layout is
/// out-channels x in-channels x kd x kh x kw.
template <typename T>
struct ConvParams {
    BasicTensor<T> kernel;
    std::optional<BasicTensor<T>> bias;
    std::array<int, 3> stride{1, 1, 1};
    std::array<int, 3> padding{0, 0, 0};
};

/// Per-channel batch normalization state. Running statistics are plain buffers,
/// not graph participants; they are mutated by training-mode forward passes.
template <typename T>
struct BatchNormState {
    BasicTensor<T> gamma;
    BasicTensor<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
    Mode mode = Mode::training;

    static BatchNormState make(std::int64_t channels, T momentum = T(0.1), T eps = T(1e-5));
    std::int64_t channels() const { return gamma.numel(); }
};

enum class PointwiseKind { add, sub, mul, relu, sigmoid, tanh };

/// 5-axis input (batch, channel, depth, height, width).
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const ConvParams<T>& p);

template <typename T>
BasicTensor<T> batchnorm3d(const BasicTensor<T>& x, BatchNormState<T>& state);

/// Binary ops accept equal shapes, or `b` with channel extent 1 that is
/// broadcast over every channel of `a`.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x);

/// Dispatches on `kind`; `b` is required for binary kinds and ignored otherwise.
template <typename T>
BasicTensor<T> pointwise(PointwiseKind kind, const BasicTensor<T>& a,
                         const BasicTensor<T>* b = nullptr);

/// Mean over every axis after the channel axis: (B, C, ...) -> (B, C).
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// x: (B, F), weight: (O, F), bias: (O) -> (B, O).
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

/// Concatenation along axis 1; all other extents must match.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

/// Mean over the batch of weight[y] * -log softmax(logits)[y].
template <typename T>
BasicTensor<T> weighted_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels,
                                      std::span<const T> class_weights);

/// Row-wise softmax of (B, K) logits, no graph.
template <typename T>
std::vector<T> softmax_rows(const BasicTensor<T>& logits);

} // namespace mfn::tensor
