// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mfn/nets/network.hpp"

namespace mfn::nets {

// Layout (little-endian):
//   "FNET" u32 version
//   u32 stages, blocks, base_channels, depth, height, width
//   u8 strategy, u64 seed, f32 bn_momentum, f32 bn_eps
//   u64 count, count x f32 (parameters then batch-norm buffers)
//   u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t checkpoint_version = 1;

std::string serialize(Network& net);
Network deserialize(const std::string& bytes);

void save_checkpoint(Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

} // namespace mfn::nets
