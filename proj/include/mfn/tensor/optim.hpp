// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfn/tensor/tensor.hpp"

namespace mfn::tensor {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment buffers are allocated on the first step and keyed by parameter
/// position, so the parameter list must keep its order between steps.
struct AdamState {
    AdamOptions options;
    std::int64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Parameters without a grad buffer are treated as having zero gradient.
void adam_step(AdamState& state, std::span<Tensor> params);

void zero_grads(std::span<Tensor> params);

struct StepSchedule {
    int decay_every = 25;
    double factor = 0.1;
};

/// initial * factor^floor(epoch / decay_every).
double lr_at_epoch(double initial, int epoch, StepSchedule schedule = {});

} // namespace mfn::tensor
