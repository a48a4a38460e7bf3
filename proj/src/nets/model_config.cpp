// SPDX-License-Identifier: Apache-2.0
#include "mfn/nets/model_config.hpp"

#include "mfn/common/errors.hpp"

namespace mfn::nets {

namespace {
constexpr std::array<std::pair<Strategy, std::string_view>, 6> kStrategyNames{{
    {Strategy::multistage, "multistage"},
    {Strategy::unimodal_ct, "unimodal_ct"},
    {Strategy::unimodal_pet, "unimodal_pet"},
    {Strategy::early, "early"},
    {Strategy::late, "late"},
    {Strategy::single_fusion, "single_fusion"},
}};
} // namespace

std::string_view to_string(Strategy s) {
    for (const auto& [value, name] : kStrategyNames) {
        if (value == s) return name;
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (const auto& [value, n] : kStrategyNames) {
        if (n == name) return value;
    }
    throw ConfigError("unknown fusion strategy '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (stages < 1 || stages > 5) throw ConfigError("stages must lie in [1, 5], got " + std::to_string(stages));
    if (blocks_per_stage < 1 || blocks_per_stage > 5) {
        throw ConfigError("blocks_per_stage must lie in [1, 5], got " + std::to_string(blocks_per_stage));
    }
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (!(bn_momentum > 0.0f && bn_momentum < 1.0f)) throw ConfigError("bn_momentum must lie in (0, 1)");
    if (!(bn_eps > 0.0f)) throw ConfigError("bn_eps must be positive");
    if (to_string(strategy) == "unknown") throw ConfigError("invalid strategy code");
    const int factor = 1 << stages;
    for (int extent : input_shape) {
        if (extent < factor || extent % factor != 0) {
            throw ConfigError("input extent " + std::to_string(extent) + " is not a positive multiple of 2^" +
                              std::to_string(stages));
        }
    }
}

BlockSpec block_spec(const ModelConfig& cfg, int stage, int block) {
    BlockSpec spec;
    spec.out_channels = cfg.stage_channels(stage);
    if (block == 0) {
        spec.in_channels = stage == 0 ? 1 : cfg.stage_channels(stage - 1);
        spec.stride = 2;
    } else {
        spec.in_channels = spec.out_channels;
        spec.stride = 1;
    }
    return spec;
}

} // namespace mfn::nets
