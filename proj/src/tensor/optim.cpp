// SPDX-License-Identifier: Apache-2.0
#include "mfn/tensor/optim.hpp"

#include <cmath>
#include <string>

#include "mfn/common/errors.hpp"

namespace mfn::tensor {

void adam_step(AdamState& state, std::span<Tensor> params) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0f);
            state.second_moment[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0f);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ConfigError("adam_step: parameter list changed between steps");
    }
    state.step += 1;
    const auto& o = state.options;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(o.beta1, t);
    const double bc2_sqrt = std::sqrt(1.0 - std::pow(o.beta2, t));
    const auto step_size = static_cast<float>(o.lr / bc1);
    const auto b1 = static_cast<float>(o.beta1);
    const auto b2 = static_cast<float>(o.beta2);
    const auto one_minus_b1 = static_cast<float>(1.0 - o.beta1);
    const auto one_minus_b2 = static_cast<float>(1.0 - o.beta2);
    const auto eps = static_cast<float>(o.eps);
    const auto inv_bc2_sqrt = static_cast<float>(1.0 / bc2_sqrt);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != static_cast<std::size_t>(params[i].numel())) {
            throw ConfigError("adam_step: moment buffer shape mismatch for parameter " + std::to_string(i));
        }
        if (!params[i].has_grad()) continue;
        auto p = params[i].values();
        const auto g = params[i].grad();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + one_minus_b1 * g[k];
            v[k] = b2 * v[k] + one_minus_b2 * g[k] * g[k];
            const float denom = std::sqrt(v[k]) * inv_bc2_sqrt + eps;
            p[k] -= step_size * m[k] / denom;
        }
    }
}

void zero_grads(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

double lr_at_epoch(double initial, int epoch, StepSchedule schedule) {
    if (epoch < 0) throw ConfigError("lr_at_epoch: negative epoch " + std::to_string(epoch));
    if (schedule.decay_every <= 0) throw ConfigError("lr_at_epoch: decay interval must be positive");
    return initial * std::pow(schedule.factor, epoch / schedule.decay_every);
}

} // namespace mfn::tensor
