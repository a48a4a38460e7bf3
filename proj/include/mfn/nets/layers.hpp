// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "mfn/nets/model_config.hpp"
#include "mfn/tensor/ops.hpp"

namespace mfn::nets {

using tensor::Tensor;
using Conv = tensor::ConvParams<float>;
using BatchNorm = tensor::BatchNormState<float>;

/// Feature-extraction block: conv3-BN-ReLU-conv3-BN on the main path, conv1-BN
/// on the residual path, summed and rectified.
struct BasicBlock {
    BlockSpec spec;
    Conv conv1, conv2, projection;
    BatchNorm bn1, bn2, bn_projection;
};

/// Squeezes each modality to one channel, multiplies the two maps and adds the
/// product back onto both inputs.
struct FusionBlock {
    Conv squeeze_ct, squeeze_pet;
    BatchNorm bn_ct, bn_pet;
};

struct Linear {
    Tensor weight;
    Tensor bias;
};

/// h = z * tanh(W1 v1) + (1 - z) * tanh(W2 v2), z = sigmoid(Wz [v1; v2]).
struct GatedUnit {
    Linear ct, pet, gate;
};

/// Provenance of a feature map along the fusion graph: the event (or input
/// node) it originates from and the number of trainable layers applied since.
struct PathTrace {
    int source = 0;
    int depth = 0;
};

enum class FusionOp { multiply, add, concat };

struct TracedFusion {
    int index = 0;
    FusionOp op = FusionOp::add;
    std::vector<PathTrace> inputs;
};

/// Receives the fusion events of an instrumented forward pass.
struct FusionRecorder {
    std::vector<TracedFusion> events;
    int record(FusionOp op, std::vector<PathTrace> inputs);
};

BasicBlock make_basic_block(BlockSpec spec, float bn_momentum, float bn_eps);
FusionBlock make_fusion_block(int channels, float bn_momentum, float bn_eps);
Linear make_linear(int in_features, int out_features);

Tensor basic_block_forward(const Tensor& x, BasicBlock& block, PathTrace* trace = nullptr);

std::pair<Tensor, Tensor> fusion_block_forward(const Tensor& ct_in, const Tensor& pet_in, FusionBlock& block,
                                               FusionRecorder* recorder = nullptr,
                                               PathTrace* ct_trace = nullptr, PathTrace* pet_trace = nullptr);

Tensor linear_forward(const Tensor& x, const Linear& layer);
Tensor gated_unit_forward(const Tensor& v_ct, const Tensor& v_pet, const GatedUnit& unit);

} // namespace mfn::nets
