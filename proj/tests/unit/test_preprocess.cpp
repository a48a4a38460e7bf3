// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "mfn/common/errors.hpp"
#include "mfn/common/rng.hpp"
#include "mfn/preprocess/preprocess.hpp"

namespace mfn::preprocess {
namespace {

Volume random_volume(std::array<int, 3> dims, Modality m, Rng& rng, double lo, double hi) {
    auto v = Volume::filled(dims, 0.0f, m);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

// Value of an affine field at a voxel centre of `v`.
double affine_at(const Volume& v, int z, int y, int x) {
    const double px = v.origin[0] + x * static_cast<double>(v.spacing[0]);
    const double py = v.origin[1] + y * static_cast<double>(v.spacing[1]);
    const double pz = v.origin[2] + z * static_cast<double>(v.spacing[2]);
    return 2.0 * px + 3.0 * py - pz;
}

Volume affine_volume(std::array<int, 3> dims, std::array<float, 3> spacing, std::array<float, 3> origin) {
    auto v = Volume::filled(dims, 0.0f, Modality::ct);
    v.spacing = spacing;
    v.origin = origin;
    for (int z = 0; z < dims[0]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[2]; ++x) v.at(z, y, x) = static_cast<float>(affine_at(v, z, y, x));
    return v;
}

TEST(FixPhotometric, StandardUnchangedInvertedReflected) {
    auto v = Volume::filled({1, 1, 2}, 0.0f, Modality::ct);
    v.data = {0.0f, 10.0f};
    EXPECT_EQ(fix_photometric(v).data, v.data);
    v.photometric = Photometric::inverted;
    auto fixed = fix_photometric(v);
    EXPECT_EQ(fixed.data, (std::vector<float>{10.0f, 0.0f}));
    EXPECT_EQ(fixed.photometric, Photometric::standard);
    EXPECT_EQ(fix_photometric(fixed).data, fixed.data);
}

TEST(ToHu, AffineCalibration) {
    auto v = Volume::filled({1, 1, 3}, 0.0f, Modality::ct);
    v.data = {0.0f, 1024.0f, 512.0f};
    AcquisitionMeta m;
    auto hu = to_hu(v, m);
    EXPECT_EQ(hu.data[0], -1024.0f);
    EXPECT_EQ(hu.data[1], 0.0f);
    m.rescale_slope = 2.0;
    m.rescale_intercept = -1000.0;
    EXPECT_EQ(to_hu(v, m).data[2], 24.0f);
    v.modality = Modality::pet;
    EXPECT_THROW(to_hu(v, m), DataError);
}

TEST(ToSuv, BodyWeightDecayCorrected) {
    auto v = Volume::filled({1, 1, 2}, 0.0f, Modality::pet);
    v.data = {5000.0f, 0.0f};
    AcquisitionMeta m;
    m.body_weight_kg = 70.0;
    m.injected_dose_mbq = 350.0;
    // 5000 Bq/ml * 70000 g / 350e6 Bq
    const double expected = 5000.0 * 70.0 * 1000.0 / (350.0 * 1e6);
    auto suv = to_suv(v, m);
    EXPECT_NEAR(suv.data[0], expected, 1e-6);
    EXPECT_NEAR(suv.data[0], 1.0, 1e-6);
    EXPECT_EQ(suv.data[1], 0.0f);
    m.injection_to_scan_min = m.tracer_half_life_min;
    EXPECT_NEAR(to_suv(v, m).data[0], 2.0, 1e-6);
    m.injected_dose_mbq = 0.0;
    EXPECT_THROW(to_suv(v, m), DataError);
    m.injected_dose_mbq = 350.0;
    m.body_weight_kg = -1.0;
    EXPECT_THROW(to_suv(v, m), DataError);
}

TEST(Resample, SameSpacingIsIdentity) {
    Rng rng(1);
    auto v = random_volume({5, 6, 7}, Modality::ct, rng, -1000, 1000);
    v.spacing = {0.8f, 0.9f, 2.5f};
    v.origin = {-3.0f, 4.0f, 10.0f};
    auto r = resample(v, v.spacing);
    EXPECT_EQ(r.dims, v.dims);
    EXPECT_EQ(r.data, v.data);
}

TEST(Resample, ReproducesAffineFieldsAtInteriorPoints) {
    auto v = affine_volume({9, 11, 13}, {0.7f, 1.3f, 2.9f}, {1.5f, -2.0f, 7.0f});
    auto r = resample(v, standard_spacing);
    EXPECT_EQ(r.spacing, standard_spacing);
    for (int z = 0; z < r.dims[0]; ++z)
        for (int y = 0; y < r.dims[1]; ++y)
            for (int x = 0; x < r.dims[2]; ++x) {
                const double expected = affine_at(r, z, y, x);
                EXPECT_NEAR(r.at(z, y, x), expected, 1e-4 * std::max(1.0, std::abs(expected)));
            }
}

TEST(Resample, PreservesConstantsExactly) {
    auto v = Volume::filled({4, 5, 6}, 0.1f, Modality::pet);
    v.spacing = {1.1f, 0.6f, 2.2f};
    auto r = resample(v, {0.977f, 0.977f, 3.27f});
    for (float x : r.data) EXPECT_EQ(x, 0.1f);
}

TEST(Resample, MasksStayBinary) {
    Rng rng(2);
    auto m = random_volume({6, 6, 6}, Modality::mask, rng, 0, 1);
    for (auto& x : m.data) x = x > 0.5f ? 1.0f : 0.0f;
    auto r = resample(m, {0.45f, 0.7f, 1.3f});
    for (float x : r.data) EXPECT_TRUE(x == 0.0f || x == 1.0f);
}

TEST(Resample, SingleVoxelAxisExtendsConstant) {
    auto v = Volume::filled({1, 2, 2}, 3.0f, Modality::ct);
    auto r = resample(v, {0.5f, 0.5f, 0.5f});
    EXPECT_EQ(r.dims[0], 1);
    EXPECT_EQ(r.dims[1], 3);
    for (float x : r.data) EXPECT_EQ(x, 3.0f);
}

TEST(Align, IdenticalGridsUnchanged) {
    Rng rng(3);
    auto ct = random_volume({4, 5, 6}, Modality::ct, rng, -1000, 1000);
    auto pet = random_volume({4, 5, 6}, Modality::pet, rng, 0, 10);
    auto [a, b] = align(ct, pet);
    EXPECT_EQ(a.data, ct.data);
    EXPECT_EQ(b.data, pet.data);
}

TEST(Align, ShiftedPetShrinksDepth) {
    auto ct = Volume::filled({4, 1, 1}, 0.0f, Modality::ct);
    ct.data = {10.0f, 11.0f, 12.0f, 13.0f};
    ct.spacing = {1.0f, 1.0f, 2.0f};
    auto pet = ct;
    pet.modality = Modality::pet;
    pet.data = {20.0f, 21.0f, 22.0f, 23.0f};
    pet.origin[2] = 2.0f; // one slice further along z
    auto [a, b] = align(ct, pet);
    EXPECT_EQ(a.dims[0], 3);
    EXPECT_EQ(a.origin, b.origin);
    EXPECT_EQ(a.origin[2], 2.0f);
    EXPECT_EQ(a.data, (std::vector<float>{11.0f, 12.0f, 13.0f}));
    EXPECT_EQ(b.data, (std::vector<float>{20.0f, 21.0f, 22.0f}));
}

TEST(Align, DisjointExtentsRejected) {
    auto ct = Volume::filled({2, 2, 2}, 0.0f, Modality::ct);
    auto pet = Volume::filled({2, 2, 2}, 0.0f, Modality::pet);
    pet.origin = {0.0f, 0.0f, 5.0f};
    EXPECT_THROW(align(ct, pet), DataError);
}

TEST(MaskAndCrop, FullMaskKeepsVolume) {
    Rng rng(4);
    auto ct = random_volume({4, 4, 4}, Modality::ct, rng, -500, 500);
    auto pet = random_volume({4, 4, 4}, Modality::pet, rng, 0, 5);
    auto mask = Volume::filled({4, 4, 4}, 1.0f, Modality::mask);
    auto pair = apply_mask_and_crop(ct, pet, mask, {4, 4, 4});
    EXPECT_EQ(pair.crop_box, (CropBox{{0, 0, 0}, {4, 4, 4}}));
    EXPECT_EQ(pair.ct.data, ct.data);
    EXPECT_EQ(pair.pet.data, pet.data);
}

TEST(MaskAndCrop, CubeMaskGivesCubeBounds) {
    Rng rng(5);
    auto ct = random_volume({8, 8, 8}, Modality::ct, rng, -500, 500);
    auto pet = random_volume({8, 8, 8}, Modality::pet, rng, 0, 5);
    auto mask = Volume::filled({8, 8, 8}, 0.0f, Modality::mask);
    for (int z = 2; z < 6; ++z)
        for (int y = 3; y < 6; ++y)
            for (int x = 1; x < 7; ++x) mask.at(z, y, x) = 1.0f;
    mask.at(4, 4, 4) = 0.0f; // interior hole
    auto pair = apply_mask_and_crop(ct, pet, mask, {4, 3, 6});
    EXPECT_EQ(pair.crop_box, (CropBox{{2, 3, 1}, {6, 6, 7}}));
    EXPECT_EQ(pair.ct.at(0, 0, 0), ct.at(2, 3, 1));
    EXPECT_EQ(pair.ct.at(2, 1, 3), ct_clip_min);
    EXPECT_EQ(pair.pet.at(2, 1, 3), pet_clip_min);
}

TEST(MaskAndCrop, OutsideVoxelsTakeClipMinimum) {
    Rng rng(6);
    auto ct = random_volume({4, 4, 4}, Modality::ct, rng, -500, 500);
    auto pet = random_volume({4, 4, 4}, Modality::pet, rng, 1, 5);
    auto mask = Volume::filled({4, 4, 4}, 1.0f, Modality::mask);
    mask.at(0, 0, 0) = 0.0f;
    auto pair = apply_mask_and_crop(ct, pet, mask, {4, 4, 4});
    EXPECT_EQ(pair.ct.at(0, 0, 0), -1024.0f);
    EXPECT_EQ(pair.pet.at(0, 0, 0), 0.0f);
    mask.data.assign(mask.size(), 0.0f);
    EXPECT_THROW(apply_mask_and_crop(ct, pet, mask, {4, 4, 4}), DataError);
}

TEST(ClipNormalize, FixedRanges) {
    auto ct = Volume::filled({1, 1, 5}, 0.0f, Modality::ct);
    ct.data = {-2000.0f, -1024.0f, 0.0f, 1024.0f, 3000.0f};
    auto n = clip_normalize(ct);
    EXPECT_EQ(n.data, (std::vector<float>{0.0f, 0.0f, 0.5f, 1.0f, 1.0f}));
    auto pet = Volume::filled({1, 1, 4}, 0.0f, Modality::pet);
    pet.data = {-1.0f, 0.0f, 20.0f, 25.0f};
    EXPECT_EQ(clip_normalize(pet).data, (std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f}));
}

TEST(ClipNormalize, Idempotent) {
    Rng rng(7);
    auto ct = random_volume({3, 3, 3}, Modality::ct, rng, -3000, 3000);
    auto once = clip_normalize(ct);
    EXPECT_EQ(clip_normalize(once).data, once.data);
}

struct RawStudy {
    Volume ct, pet, mask;
    AcquisitionMeta meta;
};

RawStudy raw_study(std::uint64_t seed) {
    Rng rng(seed);
    RawStudy s;
    s.ct = random_volume({12, 20, 18}, Modality::ct, rng, 0, 2500);
    s.ct.spacing = {0.8f, 0.8f, 2.5f};
    s.pet = random_volume({10, 14, 13}, Modality::pet, rng, 0, 40000);
    s.pet.spacing = {1.2f, 1.2f, 3.2f};
    s.pet.origin = {0.5f, -0.7f, 1.0f};
    s.mask = Volume::filled(s.ct.dims, 0.0f, Modality::mask);
    s.mask.spacing = s.ct.spacing;
    for (int z = 3; z < 10; ++z)
        for (int y = 4; y < 15; ++y)
            for (int x = 2; x < 16; ++x) s.mask.at(z, y, x) = ((x + y + z) % 5 != 0) ? 1.0f : 0.0f;
    s.meta.photometric = rng.uniform() < 0.5 ? Photometric::inverted : Photometric::standard;
    return s;
}

TEST(Pipeline, OutputsSatisfyInvariants) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        auto s = raw_study(seed);
        auto pair = preprocess_study(s.ct, s.pet, s.mask, s.meta, {standard_spacing, {6, 8, 10}});
        for (const Volume* v : {&pair.ct, &pair.pet, &pair.mask}) {
            EXPECT_EQ(v->dims, (std::array<int, 3>{6, 8, 10}));
            EXPECT_EQ(v->spacing, pair.ct.spacing);
            EXPECT_EQ(v->origin, pair.ct.origin);
        }
        EXPECT_EQ(pair.standard_spacing, standard_spacing);
        for (const Volume* v : {&pair.ct, &pair.pet}) {
            for (std::size_t i = 0; i < v->size(); ++i) {
                EXPECT_GE(v->data[i], 0.0f);
                EXPECT_LE(v->data[i], 1.0f);
                if (pair.mask.data[i] == 0.0f) {
                    EXPECT_EQ(v->data[i], 0.0f);
                }
            }
        }
    }
}

TEST(Pipeline, Deterministic) {
    auto s = raw_study(9);
    auto a = preprocess_study(s.ct, s.pet, s.mask, s.meta, {standard_spacing, {5, 7, 9}});
    auto b = preprocess_study(s.ct, s.pet, s.mask, s.meta, {standard_spacing, {5, 7, 9}});
    EXPECT_EQ(a.ct.data, b.ct.data);
    EXPECT_EQ(a.pet.data, b.pet.data);
    EXPECT_EQ(a.mask.data, b.mask.data);
}

} // namespace
} // namespace mfn::preprocess
