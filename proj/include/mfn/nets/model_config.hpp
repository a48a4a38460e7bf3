// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace mfn::nets {

enum class Strategy : std::uint8_t {
    multistage = 0,
    unimodal_ct = 1,
    unimodal_pet = 2,
    early = 3,
    late = 4,
    single_fusion = 5,
};

std::string_view to_string(Strategy s);
/// Throws ConfigError for unknown names.
Strategy parse_strategy(std::string_view name);

struct ModelConfig {
    int stages = 3;           // L
    int blocks_per_stage = 3; // N
    int base_channels = 16;
    std::array<int, 3> input_shape{32, 64, 64}; // depth, height, width
    Strategy strategy = Strategy::multistage;
    std::uint64_t seed = 0;
    float bn_momentum = 0.1f;
    float bn_eps = 1e-5f;

    /// Throws ConfigError on any violated invariant.
    void validate() const;

    /// Output channels of stage `stage` (0-based): base * 2^stage.
    int stage_channels(int stage) const { return base_channels << stage; }

    bool operator==(const ModelConfig&) const = default;
};

struct BlockSpec {
    int in_channels = 1;
    int out_channels = 1;
    int stride = 1;
};

/// Block `block` (0-based) of stage `stage`: the first block of every stage
/// strides by 2 and moves to the stage's channel count.
BlockSpec block_spec(const ModelConfig& cfg, int stage, int block);

} // namespace mfn::nets
