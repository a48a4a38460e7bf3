// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mfn/preprocess/volume.hpp"

namespace mfn::data {

using preprocess::Volume;

// "MVOL" u32 version, u32 D H W, f32 spacing xyz, f32 origin xyz,
// u8 modality, u8 photometric, then D*H*W f32 voxels (z, y, x order), all little-endian.
inline constexpr std::uint32_t mvol_version = 1;
inline constexpr std::size_t mvol_header_bytes = 4 + 4 + 12 + 12 + 12 + 1 + 1;

std::string encode_mvol(const Volume& v);
/// Throws FormatError (with byte offset) on bad magic, version, modality,
/// dimensions or a truncated payload.
Volume decode_mvol(std::string_view bytes);

void write_mvol(const Volume& v, const std::filesystem::path& path);
Volume read_mvol(const std::filesystem::path& path);

} // namespace mfn::data
