// SPDX-License-Identifier: Apache-2.0
#include "mfn/data/mvol.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "mfn/common/errors.hpp"

namespace mfn::data {

static_assert(std::endian::native == std::endian::little, "MVOL I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& pos, const char* what) {
    if (bytes.size() - pos < sizeof(T)) throw FormatError(std::string("truncated MVOL header at ") + what, pos);
    T value;
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

} // namespace

std::string encode_mvol(const Volume& v) {
    v.validate();
    std::string out = "MVOL";
    out.reserve(mvol_header_bytes + v.size() * sizeof(float));
    put<std::uint32_t>(out, mvol_version);
    for (int d : v.dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float s : v.spacing) put<float>(out, s);
    for (float o : v.origin) put<float>(out, o);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(v.modality));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(v.photometric));
    out.append(reinterpret_cast<const char*>(v.data.data()), v.size() * sizeof(float));
    return out;
}

Volume decode_mvol(std::string_view bytes) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != "MVOL") throw FormatError("bad MVOL magic", 0);
    std::size_t pos = 4;
    const auto version = get<std::uint32_t>(bytes, pos, "version");
    if (version != mvol_version) throw FormatError("unsupported MVOL version " + std::to_string(version), 4);

    Volume v;
    std::uint64_t voxels = 1;
    for (auto& d : v.dims) {
        const std::size_t at = pos;
        const auto extent = get<std::uint32_t>(bytes, pos, "dimensions");
        if (extent == 0 || extent > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
            throw FormatError("invalid MVOL dimension " + std::to_string(extent), at);
        }
        if (voxels > std::numeric_limits<std::uint64_t>::max() / sizeof(float) / extent) {
            throw FormatError("MVOL dimensions overflow", at);
        }
        voxels *= extent;
        d = static_cast<int>(extent);
    }
    for (auto& s : v.spacing) {
        const std::size_t at = pos;
        s = get<float>(bytes, pos, "spacing");
        if (!(s > 0.0f)) throw FormatError("non-positive MVOL spacing", at);
    }
    for (auto& o : v.origin) o = get<float>(bytes, pos, "origin");
    const std::size_t modality_at = pos;
    const auto modality = get<std::uint8_t>(bytes, pos, "modality");
    if (modality > 2) throw FormatError("unknown MVOL modality code " + std::to_string(modality), modality_at);
    v.modality = static_cast<preprocess::Modality>(modality);
    const std::size_t photometric_at = pos;
    const auto photometric = get<std::uint8_t>(bytes, pos, "photometric flag");
    if (photometric > 1) throw FormatError("unknown MVOL photometric flag", photometric_at);
    v.photometric = static_cast<preprocess::Photometric>(photometric);

    const std::uint64_t payload = voxels * sizeof(float);
    if (bytes.size() - pos < payload) {
        throw FormatError("MVOL header declares " + std::to_string(voxels) + " voxels but only " +
                              std::to_string((bytes.size() - pos) / sizeof(float)) + " are present",
                          pos);
    }
    if (bytes.size() - pos > payload) throw FormatError("trailing bytes after MVOL payload", pos + payload);
    v.data.resize(static_cast<std::size_t>(voxels));
    std::memcpy(v.data.data(), bytes.data() + pos, static_cast<std::size_t>(payload));
    if (v.modality == preprocess::Modality::mask) {
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            if (v.data[i] != 0.0f && v.data[i] != 1.0f) {
                throw FormatError("mask voxel outside {0, 1}", pos + i * sizeof(float));
            }
        }
    }
    return v;
}

void write_mvol(const Volume& v, const std::filesystem::path& path) {
    const auto bytes = encode_mvol(v);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

Volume read_mvol(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_mvol(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

} // namespace mfn::data
