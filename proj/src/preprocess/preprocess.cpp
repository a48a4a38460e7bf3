// SPDX-License-Identifier: Apache-2.0
#include "mfn/preprocess/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfn/common/errors.hpp"

namespace mfn::preprocess {

namespace {

void require_modality(const Volume& v, Modality m, const char* op) {
    if (v.modality != m) {
        throw DataError(std::string(op) + " expects a " + std::string(to_string(m)) + " volume, got " +
                        std::string(to_string(v.modality)));
    }
}

// Continuous source index for a physical coordinate, clamped to the volume and
// snapped onto the lattice when within rounding distance of a voxel centre.
double source_index(double physical, double origin, double spacing, int n) {
    double c = (physical - origin) / spacing;
    const double r = std::round(c);
    if (std::abs(c - r) < 1e-6) c = r;
    return std::clamp(c, 0.0, static_cast<double>(n - 1));
}

struct AxisSample {
    int i0 = 0;
    int i1 = 0;
    double f = 0.0;
};

AxisSample linear_sample(double c, int n) {
    AxisSample s;
    s.i0 = static_cast<int>(std::floor(c));
    s.f = c - s.i0;
    s.i1 = std::min(s.i0 + 1, n - 1);
    if (s.i1 == s.i0) s.f = 0.0;
    return s;
}

double lerp(double a, double b, double f) { return a + f * (b - a); }

Volume with_grid(const Volume& like, const Grid& grid) {
    Volume out = Volume::filled(grid.dims, 0.0f, like.modality);
    out.spacing = grid.spacing;
    out.origin = grid.origin;
    out.photometric = like.photometric;
    out.normalized = like.normalized;
    return out;
}

bool same_grid(const Volume& a, const Volume& b) {
    if (a.dims != b.dims) return false;
    for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(a.spacing[axis] - b.spacing[axis]) > 1e-5f * a.spacing[axis]) return false;
        if (std::abs(a.origin[axis] - b.origin[axis]) > 1e-4f * a.spacing[axis]) return false;
    }
    return true;
}

} // namespace

void AcquisitionMeta::validate() const {
    if (!(injected_dose_mbq > 0.0)) throw DataError("injected dose must be positive");
    if (!(body_weight_kg > 0.0)) throw DataError("body weight must be positive");
    if (!(tracer_half_life_min > 0.0)) throw DataError("tracer half-life must be positive");
    if (!(injection_to_scan_min >= 0.0)) throw DataError("injection-to-scan time must be non-negative");
}

Volume fix_photometric(const Volume& v) {
    Volume out = v;
    if (v.photometric == Photometric::standard || v.data.empty()) return out;
    const auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
    const float reflect = *lo + *hi;
    for (auto& x : out.data) x = reflect - x;
    out.photometric = Photometric::standard;
    return out;
}

Volume to_hu(const Volume& v, const AcquisitionMeta& m) {
    require_modality(v, Modality::ct, "to_hu");
    Volume out = v;
    for (auto& x : out.data) x = static_cast<float>(m.rescale_slope * x + m.rescale_intercept);
    return out;
}

Volume to_suv(const Volume& v, const AcquisitionMeta& m) {
    require_modality(v, Modality::pet, "to_suv");
    m.validate();
    const double decayed_dose_bq =
        m.injected_dose_mbq * 1e6 * std::exp2(-m.injection_to_scan_min / m.tracer_half_life_min);
    const double factor = m.body_weight_kg * 1000.0 / decayed_dose_bq;
    Volume out = v;
    for (auto& x : out.data) x = static_cast<float>(x * factor);
    return out;
}

Volume sample_onto(const Volume& v, const Grid& grid, Interpolation interp) {
    v.validate();
    Volume out = with_grid(v, grid);
    std::array<std::vector<double>, 3> coords; // per index axis (z, y, x)
    for (int d = 0; d < 3; ++d) {
        const int axis = dim_of_axis(d);
        coords[d].resize(static_cast<std::size_t>(grid.dims[d]));
        for (int i = 0; i < grid.dims[d]; ++i) {
            const double physical = static_cast<double>(grid.origin[axis]) + i * static_cast<double>(grid.spacing[axis]);
            coords[d][i] = source_index(physical, v.origin[axis], v.spacing[axis], v.dims[d]);
        }
    }
    if (interp == Interpolation::nearest) {
        for (int z = 0; z < grid.dims[0]; ++z) {
            const int sz = static_cast<int>(std::lround(coords[0][z]));
            for (int y = 0; y < grid.dims[1]; ++y) {
                const int sy = static_cast<int>(std::lround(coords[1][y]));
                for (int x = 0; x < grid.dims[2]; ++x) {
                    out.at(z, y, x) = v.at(sz, sy, static_cast<int>(std::lround(coords[2][x])));
                }
            }
        }
        return out;
    }
    for (int z = 0; z < grid.dims[0]; ++z) {
        const auto sz = linear_sample(coords[0][z], v.dims[0]);
        for (int y = 0; y < grid.dims[1]; ++y) {
            const auto sy = linear_sample(coords[1][y], v.dims[1]);
            for (int x = 0; x < grid.dims[2]; ++x) {
                const auto sx = linear_sample(coords[2][x], v.dims[2]);
                auto row = [&](int zz, int yy) { return lerp(v.at(zz, yy, sx.i0), v.at(zz, yy, sx.i1), sx.f); };
                auto plane = [&](int zz) { return lerp(row(zz, sy.i0), row(zz, sy.i1), sy.f); };
                out.at(z, y, x) = static_cast<float>(lerp(plane(sz.i0), plane(sz.i1), sz.f));
            }
        }
    }
    return out;
}

Volume resample(const Volume& v, std::array<float, 3> target_spacing) {
    v.validate();
    Grid grid;
    grid.origin = v.origin;
    grid.spacing = target_spacing;
    for (int axis = 0; axis < 3; ++axis) {
        if (!(target_spacing[axis] > 0.0f)) throw DataError("target spacing must be positive");
        const int d = dim_of_axis(axis);
        const double span = static_cast<double>(v.dims[d] - 1) * v.spacing[axis] / target_spacing[axis];
        grid.dims[d] = static_cast<int>(std::floor(span + 1e-6)) + 1;
    }
    return sample_onto(v, grid, v.modality == Modality::mask ? Interpolation::nearest : Interpolation::linear);
}

std::pair<Volume, Volume> align(const Volume& ct, const Volume& pet) {
    ct.validate();
    pet.validate();
    Grid grid;
    for (int axis = 0; axis < 3; ++axis) {
        const double s = ct.spacing[axis];
        if (std::abs(s - pet.spacing[axis]) > 1e-5 * s) {
            throw DataError("align needs a common spacing; resample both volumes first");
        }
        const int d = dim_of_axis(axis);
        const double lo = std::max<double>(ct.origin[axis], pet.origin[axis]);
        const double hi = std::min(ct.origin[axis] + (ct.dims[d] - 1) * s, pet.origin[axis] + (pet.dims[d] - 1) * s);
        if (hi < lo - 1e-6 * s) throw DataError("CT and PET volumes do not overlap physically");
        grid.dims[d] = static_cast<int>(std::floor((hi - lo) / s + 1e-6)) + 1;
        grid.origin[axis] = static_cast<float>(lo);
        grid.spacing[axis] = ct.spacing[axis];
    }
    return {sample_onto(ct, grid, Interpolation::linear), sample_onto(pet, grid, Interpolation::linear)};
}

std::pair<float, float> clip_range(Modality m) {
    switch (m) {
        case Modality::ct: return {ct_clip_min, ct_clip_max};
        case Modality::pet: return {pet_clip_min, pet_clip_max};
        case Modality::mask: break;
    }
    throw DataError("masks have no intensity clip range");
}

PreprocessedPair apply_mask_and_crop(const Volume& ct, const Volume& pet, const Volume& mask,
                                     std::array<int, 3> out_shape) {
    require_modality(ct, Modality::ct, "apply_mask_and_crop");
    require_modality(pet, Modality::pet, "apply_mask_and_crop");
    require_modality(mask, Modality::mask, "apply_mask_and_crop");
    mask.validate();
    if (!same_grid(ct, pet) || !same_grid(ct, mask)) throw DataError("CT, PET and mask must share one grid");
    for (int d : out_shape) {
        if (d <= 0) throw ConfigError("output shape must be positive");
    }

    CropBox box{{ct.dims[0], ct.dims[1], ct.dims[2]}, {0, 0, 0}};
    for (int z = 0; z < mask.dims[0]; ++z) {
        for (int y = 0; y < mask.dims[1]; ++y) {
            for (int x = 0; x < mask.dims[2]; ++x) {
                if (mask.at(z, y, x) == 0.0f) continue;
                const std::array<int, 3> p{z, y, x};
                for (int d = 0; d < 3; ++d) {
                    box.begin[d] = std::min(box.begin[d], p[d]);
                    box.end[d] = std::max(box.end[d], p[d] + 1);
                }
            }
        }
    }
    if (box.end[0] == 0) throw DataError("lung mask is empty");

    Grid grid;
    grid.dims = out_shape;
    for (int axis = 0; axis < 3; ++axis) {
        const int d = dim_of_axis(axis);
        const int n_in = box.end[d] - box.begin[d];
        const double s = ct.spacing[axis];
        const double first = ct.origin[axis] + box.begin[d] * s;
        if (out_shape[d] == 1) {
            grid.spacing[axis] = static_cast<float>(n_in * s);
            grid.origin[axis] = static_cast<float>(first + 0.5 * (n_in - 1) * s);
        } else {
            grid.spacing[axis] = static_cast<float>((n_in - 1) * s / (out_shape[d] - 1));
            if (n_in == 1) grid.spacing[axis] = static_cast<float>(s);
            grid.origin[axis] = static_cast<float>(first);
        }
    }

    auto masked = [&](const Volume& v) {
        Volume out = v;
        const float fill = clip_range(v.modality).first;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (mask.data[i] == 0.0f) out.data[i] = fill;
        }
        return out;
    };
    PreprocessedPair pair;
    pair.crop_box = box;
    pair.mask = sample_onto(mask, grid, Interpolation::nearest);
    pair.ct = sample_onto(masked(ct), grid, Interpolation::linear);
    pair.pet = sample_onto(masked(pet), grid, Interpolation::linear);
    // Interpolation blends across the mask boundary; restore the exact fill value.
    for (Volume* v : {&pair.ct, &pair.pet}) {
        const float fill = clip_range(v->modality).first;
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (pair.mask.data[i] == 0.0f) v->data[i] = fill;
        }
    }
    return pair;
}

Volume clip_normalize(const Volume& v) {
    const auto [lo, hi] = clip_range(v.modality);
    Volume out = v;
    if (v.normalized) return out;
    const float width = hi - lo;
    for (auto& x : out.data) x = (std::clamp(x, lo, hi) - lo) / width;
    out.normalized = true;
    return out;
}

PreprocessedPair preprocess_study(const Volume& ct_raw, const Volume& pet_raw, const Volume& mask,
                                  const AcquisitionMeta& meta, const PipelineOptions& options) {
    meta.validate();
    require_modality(ct_raw, Modality::ct, "preprocess_study");
    require_modality(pet_raw, Modality::pet, "preprocess_study");
    require_modality(mask, Modality::mask, "preprocess_study");
    if (!same_grid(ct_raw, mask)) throw DataError("mask must share the raw CT grid");

    auto flagged = [&](const Volume& v) {
        Volume out = v;
        if (meta.photometric == Photometric::inverted) out.photometric = Photometric::inverted;
        return out;
    };
    Volume ct = to_hu(fix_photometric(flagged(ct_raw)), meta);
    Volume pet = to_suv(fix_photometric(flagged(pet_raw)), meta);
    ct = resample(ct, options.target_spacing);
    pet = resample(pet, options.target_spacing);
    auto [ct_aligned, pet_aligned] = align(ct, pet);
    const Grid aligned{ct_aligned.dims, ct_aligned.spacing, ct_aligned.origin};
    const Volume mask_aligned = sample_onto(mask, aligned, Interpolation::nearest);

    auto pair = apply_mask_and_crop(ct_aligned, pet_aligned, mask_aligned, options.out_shape);
    pair.ct = clip_normalize(pair.ct);
    pair.pet = clip_normalize(pair.pet);
    pair.standard_spacing = options.target_spacing;
    return pair;
}

} // namespace mfn::preprocess
