// SPDX-License-Identifier: Apache-2.0
#include "mfn/nets/layers.hpp"

#include "mfn/common/errors.hpp"

namespace mfn::nets {

using namespace mfn::tensor;

namespace {

Conv make_conv(int in_channels, int out_channels, int kernel, int stride) {
    Conv c;
    c.kernel = Tensor::zeros({out_channels, in_channels, kernel, kernel, kernel}, true);
    c.stride = {stride, stride, stride};
    const int pad = kernel / 2;
    c.padding = {pad, pad, pad};
    return c;
}

} // namespace

int FusionRecorder::record(FusionOp op, std::vector<PathTrace> inputs) {
    const int index = static_cast<int>(events.size()) + 1;
    events.push_back({index, op, std::move(inputs)});
    return index;
}

BasicBlock make_basic_block(BlockSpec spec, float bn_momentum, float bn_eps) {
    BasicBlock b;
    b.spec = spec;
    b.conv1 = make_conv(spec.in_channels, spec.out_channels, 3, spec.stride);
    b.conv2 = make_conv(spec.out_channels, spec.out_channels, 3, 1);
    b.projection = make_conv(spec.in_channels, spec.out_channels, 1, spec.stride);
    b.bn1 = BatchNorm::make(spec.out_channels, bn_momentum, bn_eps);
    b.bn2 = BatchNorm::make(spec.out_channels, bn_momentum, bn_eps);
    b.bn_projection = BatchNorm::make(spec.out_channels, bn_momentum, bn_eps);
    return b;
}

FusionBlock make_fusion_block(int channels, float bn_momentum, float bn_eps) {
    FusionBlock f;
    f.squeeze_ct = make_conv(channels, 1, 1, 1);
    f.squeeze_pet = make_conv(channels, 1, 1, 1);
    f.bn_ct = BatchNorm::make(1, bn_momentum, bn_eps);
    f.bn_pet = BatchNorm::make(1, bn_momentum, bn_eps);
    return f;
}

Linear make_linear(int in_features, int out_features) {
    return {Tensor::zeros({out_features, in_features}, true), Tensor::zeros({out_features}, true)};
}

Tensor basic_block_forward(const Tensor& x, BasicBlock& block, PathTrace* trace) {
    if (x.rank() != 5 || x.dim(1) != block.spec.in_channels) {
        throw ConfigError("basic block expects " + std::to_string(block.spec.in_channels) +
                          " input channels, got shape " + tensor::to_string(x.shape()));
    }
    auto main = relu(batchnorm3d(conv3d(x, block.conv1), block.bn1));
    main = batchnorm3d(conv3d(main, block.conv2), block.bn2);
    auto residual = batchnorm3d(conv3d(x, block.projection), block.bn_projection);
    if (trace) trace->depth += 2; // conv1 and conv2 on the main path
    return relu(add(main, residual));
}

std::pair<Tensor, Tensor> fusion_block_forward(const Tensor& ct_in, const Tensor& pet_in, FusionBlock& block,
                                               FusionRecorder* recorder, PathTrace* ct_trace,
                                               PathTrace* pet_trace) {
    if (ct_in.shape() != pet_in.shape()) {
        throw ConfigError("fusion block: CT " + tensor::to_string(ct_in.shape()) + " and PET " +
                          tensor::to_string(pet_in.shape()) + " differ");
    }
    auto ct_map = batchnorm3d(conv3d(ct_in, block.squeeze_ct), block.bn_ct);
    auto pet_map = batchnorm3d(conv3d(pet_in, block.squeeze_pet), block.bn_pet);
    auto fused = mul(ct_map, pet_map);
    auto ct_out = add(ct_in, fused);
    auto pet_out = add(pet_in, fused);

    if (recorder && ct_trace && pet_trace) {
        const int product = recorder->record(
            FusionOp::multiply, {{ct_trace->source, ct_trace->depth + 1}, {pet_trace->source, pet_trace->depth + 1}});
        const int ct_sum = recorder->record(FusionOp::add, {*ct_trace, {product, 0}});
        const int pet_sum = recorder->record(FusionOp::add, {*pet_trace, {product, 0}});
        *ct_trace = {ct_sum, 0};
        *pet_trace = {pet_sum, 0};
    }
    return {std::move(ct_out), std::move(pet_out)};
}

Tensor linear_forward(const Tensor& x, const Linear& layer) { return linear(x, layer.weight, layer.bias); }

Tensor gated_unit_forward(const Tensor& v_ct, const Tensor& v_pet, const GatedUnit& unit) {
    auto h_ct = tanh(linear_forward(v_ct, unit.ct));
    auto h_pet = tanh(linear_forward(v_pet, unit.pet));
    auto z = sigmoid(linear_forward(concat_channels(v_ct, v_pet), unit.gate));
    // z*a + (1-z)*b == b + z*(a-b)
    return add(h_pet, mul(z, sub(h_ct, h_pet)));
}

} // namespace mfn::nets
