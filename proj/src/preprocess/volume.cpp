// SPDX-License-Identifier: Apache-2.0
#include "mfn/preprocess/volume.hpp"

#include <string>

#include "mfn/common/errors.hpp"

namespace mfn::preprocess {

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::ct: return "CT";
        case Modality::pet: return "PET";
        case Modality::mask: return "MASK";
    }
    return "unknown";
}

Volume Volume::filled(std::array<int, 3> dims, float value, Modality modality) {
    Volume v;
    v.dims = dims;
    v.modality = modality;
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw DataError("volume dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    v.data.assign(n, value);
    return v;
}

std::array<double, 3> Volume::extent() const {
    std::array<double, 3> e{};
    for (int axis = 0; axis < 3; ++axis) {
        e[axis] = static_cast<double>(dims[dim_of_axis(axis)] - 1) * spacing[axis];
    }
    return e;
}

void Volume::validate() const {
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw DataError("volume dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    if (n != data.size()) {
        throw DataError("volume holds " + std::to_string(data.size()) + " voxels, dimensions imply " +
                        std::to_string(n));
    }
    for (float s : spacing) {
        if (!(s > 0.0f)) throw DataError("voxel spacing must be positive");
    }
    if (modality == Modality::mask) {
        for (float x : data) {
            if (x != 0.0f && x != 1.0f) throw DataError("mask volumes may only contain 0 and 1");
        }
    }
}

} // namespace mfn::preprocess
