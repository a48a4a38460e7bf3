// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mfn::preprocess {

enum class Modality : std::uint8_t { ct = 0, pet = 1, mask = 2 };
enum class Photometric : std::uint8_t { standard = 0, inverted = 1 };

std::string_view to_string(Modality m);

/// Index order is (depth, height, width) = (z, y, x); spacing and origin are
/// given as (x, y, z) in millimetres.
struct Volume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::array<float, 3> origin{0.0f, 0.0f, 0.0f};
    Modality modality = Modality::ct;
    Photometric photometric = Photometric::standard;
    bool normalized = false; // intensities already clipped and mapped to [0, 1]
    std::vector<float> data;

    static Volume filled(std::array<int, 3> dims, float value, Modality modality);

    std::size_t size() const { return data.size(); }
    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(dims[2]) +
               static_cast<std::size_t>(x);
    }
    float& at(int z, int y, int x) { return data[index(z, y, x)]; }
    float at(int z, int y, int x) const { return data[index(z, y, x)]; }

    /// Physical extent along (x, y, z) from the first to the last voxel centre.
    std::array<double, 3> extent() const;

    /// Throws DataError on a shape/data mismatch, non-positive spacing or a
    /// non-binary mask.
    void validate() const;
};

/// (x, y, z) axis -> index into dims.
constexpr int dim_of_axis(int axis) { return 2 - axis; }

} // namespace mfn::preprocess
