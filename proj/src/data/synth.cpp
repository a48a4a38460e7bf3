// SPDX-License-Identifier: Apache-2.0
#include "mfn/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mfn/common/errors.hpp"
#include "mfn/common/parallel.hpp"
#include "mfn/common/rng.hpp"
#include "mfn/data/manifest.hpp"
#include "mfn/data/mvol.hpp"

namespace mfn::data {

namespace {

std::size_t voxel_count(std::array<int, 3> s) {
    return static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) * static_cast<std::size_t>(s[2]);
}

// White noise blurred by a 3x3x3 box filter (edge-clamped), rescaled to unit variance.
std::vector<float> texture(Rng& rng, std::array<int, 3> s) {
    const auto [d, h, w] = s;
    std::vector<float> noise(voxel_count(s));
    for (auto& x : noise) x = static_cast<float>(rng.normal());
    auto idx = [&](int z, int y, int x) {
        return (static_cast<std::size_t>(z) * static_cast<std::size_t>(h) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(w) +
               static_cast<std::size_t>(x);
    };
    std::vector<float> out(noise.size());
    const float scale = std::sqrt(27.0f) / 27.0f;
    for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            acc += noise[idx(std::clamp(z + dz, 0, d - 1), std::clamp(y + dy, 0, h - 1),
                                             std::clamp(x + dx, 0, w - 1))];
                        }
                out[idx(z, y, x)] = acc * scale;
            }
    return out;
}

} // namespace

void SynthParams::validate() const {
    if (n_studies < 1) throw ConfigError("n_studies must be positive");
    if (!(amplitude > 0.0)) throw ConfigError("amplitude must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
    if (!(texture_sigma >= 0.0)) throw ConfigError("texture_sigma must be non-negative");
    if (!(balance > 0.0 && balance < 1.0)) throw ConfigError("balance must lie in (0, 1)");
    if (!(blob_radius > 0.0)) throw ConfigError("blob_radius must be positive");
    for (int extent : shape) {
        if (extent < 2 * static_cast<int>(std::ceil(blob_radius)) + 1) {
            throw ConfigError("synthetic volume extent " + std::to_string(extent) + " is too small for blob radius " +
                              std::to_string(blob_radius));
        }
    }
}

std::vector<float> synth_lung_mask(std::array<int, 3> shape) {
    const auto [d, h, w] = shape;
    std::vector<float> mask(voxel_count(shape), 0.0f);
    const double cz = 0.5 * (d - 1), cy = 0.5 * (h - 1);
    const double rz = 0.48 * d, ry = 0.42 * h, rx = 0.22 * w;
    std::size_t i = 0;
    for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x, ++i) {
                for (double cx : {0.27 * (w - 1), 0.73 * (w - 1)}) {
                    const double q = std::pow((z - cz) / rz, 2) + std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2);
                    if (q <= 1.0) mask[i] = 1.0f;
                }
            }
    return mask;
}

SynthDataset synth_generate(const SynthParams& p, int workers) {
    p.validate();
    SynthDataset out;
    out.params = p;
    out.data.shape = p.shape;
    out.lung_mask = synth_lung_mask(p.shape);
    const auto [d, h, w] = p.shape;

    // Blob centres: lung voxels at least one radius away from the volume border.
    std::vector<std::array<int, 3>> centres;
    const int margin = static_cast<int>(std::ceil(p.blob_radius));
    for (int z = margin; z < d - margin; ++z)
        for (int y = margin; y < h - margin; ++y)
            for (int x = margin; x < w - margin; ++x) {
                const auto i = (static_cast<std::size_t>(z) * static_cast<std::size_t>(h) + static_cast<std::size_t>(y)) *
                                   static_cast<std::size_t>(w) +
                               static_cast<std::size_t>(x);
                if (out.lung_mask[i] != 0.0f) centres.push_back({z, y, x});
            }
    if (centres.empty()) throw ConfigError("synthetic lungs leave no room for a blob");

    const auto n = static_cast<std::size_t>(p.n_studies);
    out.data.samples.resize(n);
    out.latents.resize(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng(derive_seed(p.seed, static_cast<std::uint64_t>(i)));
        const int label = rng.uniform() < p.balance ? 1 : 0;
        const int sign = rng.uniform() < 0.5 ? -1 : 1;
        SynthLatent lat;
        lat.sign = sign;
        lat.amp_ct = sign * p.amplitude + rng.normal(0.0, p.noise_sigma);
        lat.amp_pet = sign * p.amplitude * (2 * label - 1) + rng.normal(0.0, p.noise_sigma);
        lat.center = centres[static_cast<std::size_t>(rng.below(centres.size()))];
        const auto ct_texture = texture(rng, p.shape);
        const auto pet_texture = texture(rng, p.shape);

        Sample s;
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%05zu", i);
        s.id = id;
        s.label = label;
        s.ct.assign(voxel_count(p.shape), 0.0f);
        s.pet.assign(voxel_count(p.shape), 0.0f);
        const double inv_two_r2 = 1.0 / (2.0 * p.blob_radius * p.blob_radius);
        std::size_t v = 0;
        for (int z = 0; z < d; ++z)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x, ++v) {
                    if (out.lung_mask[v] == 0.0f) continue;
                    const double r2 = std::pow(z - lat.center[0], 2) + std::pow(y - lat.center[1], 2) +
                                      std::pow(x - lat.center[2], 2);
                    const double profile = std::exp(-r2 * inv_two_r2);
                    s.ct[v] = static_cast<float>(
                        std::clamp(p.background + p.texture_sigma * ct_texture[v] + lat.amp_ct * profile, 0.0, 1.0));
                    s.pet[v] = static_cast<float>(
                        std::clamp(p.background + p.texture_sigma * pet_texture[v] + lat.amp_pet * profile, 0.0, 1.0));
                }
        out.data.samples[i] = std::move(s);
        out.latents[i] = lat;
    });
    return out;
}

std::filesystem::path export_synth(const SynthDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "volumes");
    preprocess::AcquisitionMeta meta; // slope 1, intercept -1024, 350 MBq, 70 kg, scan at injection time
    const double bq_per_suv = meta.injected_dose_mbq * 1e6 / (meta.body_weight_kg * 1000.0);

    auto volume = [&](const std::vector<float>& values, preprocess::Modality m) {
        Volume v = Volume::filled(ds.data.shape, 0.0f, m);
        v.spacing = preprocess::standard_spacing;
        v.data = values;
        return v;
    };
    Volume mask = volume(ds.lung_mask, preprocess::Modality::mask);
    write_mvol(mask, dir / "volumes" / "lung_mask.mvol");

    std::vector<StudyRecord> records;
    for (const auto& s : ds.data.samples) {
        Volume ct = volume(s.ct, preprocess::Modality::ct);
        for (auto& x : ct.data) x = x * (preprocess::ct_clip_max - preprocess::ct_clip_min);
        Volume pet = volume(s.pet, preprocess::Modality::pet);
        for (auto& x : pet.data) x = static_cast<float>(x * preprocess::pet_clip_max * bq_per_suv);
        const auto ct_name = std::filesystem::path("volumes") / (s.id + "_ct.mvol");
        const auto pet_name = std::filesystem::path("volumes") / (s.id + "_pet.mvol");
        write_mvol(ct, dir / ct_name);
        write_mvol(pet, dir / pet_name);
        records.push_back({s.id, ct_name, pet_name, std::filesystem::path("volumes") / "lung_mask.mvol", s.label, meta});
    }
    const auto manifest = dir / "manifest.json";
    write_manifest(records, manifest);
    return manifest;
}

} // namespace mfn::data
