// SPDX-License-Identifier: Apache-2.0
#include "mfn/nets/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "mfn/common/errors.hpp"
#include "mfn/common/rng.hpp"

namespace mfn::nets {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char magic[4] = {'F', 'N', 'E', 'T'};

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
    }

    std::size_t pos() const { return pos_; }
    const char* cursor() const { return bytes_.data() + pos_; }
    void skip(std::size_t n) { pos_ += n; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string serialize(Network& net) {
    const auto& cfg = net.config();
    std::string out(magic, sizeof(magic));
    put<std::uint32_t>(out, checkpoint_version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.stages));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.blocks_per_stage));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.base_channels));
    for (int extent : cfg.input_shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(extent));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.strategy));
    put<std::uint64_t>(out, cfg.seed);
    put<float>(out, cfg.bn_momentum);
    put<float>(out, cfg.bn_eps);
    const auto state = net.flat_state();
    put<std::uint64_t>(out, state.size());
    out.append(reinterpret_cast<const char*>(state.data()), state.size() * sizeof(float));
    put<std::uint64_t>(out, fnv1a64(out));
    return out;
}

Network deserialize(const std::string& bytes) {
    Reader in(bytes);
    in.need(sizeof(magic), "magic");
    if (std::memcmp(in.cursor(), magic, sizeof(magic)) != 0) throw FormatError("not a checkpoint (bad magic)", 0);
    in.skip(sizeof(magic));
    const std::size_t version_at = in.pos();
    const auto version = in.get<std::uint32_t>("version");
    if (version != checkpoint_version) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    ModelConfig cfg;
    cfg.stages = static_cast<int>(in.get<std::uint32_t>("stages"));
    cfg.blocks_per_stage = static_cast<int>(in.get<std::uint32_t>("blocks"));
    cfg.base_channels = static_cast<int>(in.get<std::uint32_t>("base channels"));
    for (auto& extent : cfg.input_shape) extent = static_cast<int>(in.get<std::uint32_t>("input shape"));
    const std::size_t strategy_at = in.pos();
    const auto strategy = in.get<std::uint8_t>("strategy");
    if (strategy > static_cast<std::uint8_t>(Strategy::single_fusion)) {
        throw FormatError("unknown strategy code " + std::to_string(strategy), strategy_at);
    }
    cfg.strategy = static_cast<Strategy>(strategy);
    cfg.seed = in.get<std::uint64_t>("seed");
    cfg.bn_momentum = in.get<float>("bn momentum");
    cfg.bn_eps = in.get<float>("bn eps");
    const std::size_t count_at = in.pos();
    const auto count = in.get<std::uint64_t>("state size");
    if (count > (bytes.size() - in.pos()) / sizeof(float)) {
        throw FormatError("truncated checkpoint: state of " + std::to_string(count) + " values does not fit", count_at);
    }
    std::vector<float> state(count);
    std::memcpy(state.data(), in.cursor(), count * sizeof(float));
    in.skip(count * sizeof(float));
    const std::size_t checksum_at = in.pos();
    const auto checksum = in.get<std::uint64_t>("checksum");
    if (checksum != fnv1a64(std::string_view(bytes).substr(0, checksum_at))) {
        throw FormatError("checkpoint checksum mismatch", checksum_at);
    }
    if (in.pos() != bytes.size()) throw FormatError("trailing bytes after checkpoint", in.pos());

    Network net = [&] {
        try {
            return Network(cfg);
        } catch (const ConfigError& e) {
            throw FormatError(std::string("invalid configuration in checkpoint: ") + e.what(), 8);
        }
    }();
    try {
        net.load_flat_state(state);
    } catch (const ConfigError& e) {
        throw FormatError(e.what(), count_at);
    }
    return net;
}

void save_checkpoint(Network& net, const std::filesystem::path& path) {
    const auto bytes = serialize(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

} // namespace mfn::nets
