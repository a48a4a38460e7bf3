// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "mfn/preprocess/volume.hpp"

namespace mfn::preprocess {

struct AcquisitionMeta {
    double rescale_slope = 1.0;
    double rescale_intercept = -1024.0;
    double injected_dose_mbq = 350.0;
    double body_weight_kg = 70.0;
    double injection_to_scan_min = 0.0;
    double tracer_half_life_min = 109.77; // [18F]FDG
    Photometric photometric = Photometric::standard;

    /// Throws DataError unless dose, weight and half-life are positive.
    void validate() const;
};

inline constexpr std::array<float, 3> standard_spacing{0.977f, 0.977f, 3.27f};
inline constexpr float ct_clip_min = -1024.0f;
inline constexpr float ct_clip_max = 1024.0f;
inline constexpr float pet_clip_min = 0.0f;
inline constexpr float pet_clip_max = 20.0f;

/// Bounds in voxel indices of the cropped region, (z, y, x), half-open.
struct CropBox {
    std::array<int, 3> begin{0, 0, 0};
    std::array<int, 3> end{0, 0, 0};
    bool operator==(const CropBox&) const = default;
};

struct PreprocessedPair {
    Volume ct;
    Volume pet;
    Volume mask;
    CropBox crop_box;
    std::array<float, 3> standard_spacing{preprocess::standard_spacing};
};

/// Sampling grid: dims (z, y, x), spacing and origin (x, y, z).
struct Grid {
    std::array<int, 3> dims{0, 0, 0};
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
    std::array<float, 3> origin{0.0f, 0.0f, 0.0f};
};

enum class Interpolation { linear, nearest };

Volume fix_photometric(const Volume& v);
Volume to_hu(const Volume& v, const AcquisitionMeta& m);
Volume to_suv(const Volume& v, const AcquisitionMeta& m);

/// Samples `v` at every voxel centre of `grid`; positions outside the source
/// take the nearest edge value.
Volume sample_onto(const Volume& v, const Grid& grid, Interpolation interp);

/// Trilinear (nearest for masks) resampling to `target_spacing`, keeping the
/// origin and covering the same physical extent.
Volume resample(const Volume& v, std::array<float, 3> target_spacing);

/// Both volumes resampled onto the intersection of their physical extents.
std::pair<Volume, Volume> align(const Volume& ct, const Volume& pet);

/// Clip bounds (lo, hi) of a CT or PET volume.
std::pair<float, float> clip_range(Modality m);

PreprocessedPair apply_mask_and_crop(const Volume& ct, const Volume& pet, const Volume& mask,
                                     std::array<int, 3> out_shape);

Volume clip_normalize(const Volume& v);

struct PipelineOptions {
    std::array<float, 3> target_spacing{standard_spacing};
    std::array<int, 3> out_shape{32, 64, 64};
};

/// The full six-step pipeline. `mask` must share the raw CT grid.
PreprocessedPair preprocess_study(const Volume& ct_raw, const Volume& pet_raw, const Volume& mask,
                                  const AcquisitionMeta& meta, const PipelineOptions& options = {});

} // namespace mfn::preprocess
