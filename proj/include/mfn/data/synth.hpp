// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mfn/data/dataset.hpp"

namespace mfn::data {

/// Paired CT/PET volumes whose label is the XOR of two latent blob signs:
/// each modality alone is uninformative, the product of the two is not.
struct SynthParams {
    int n_studies = 600;
    std::array<int, 3> shape{16, 32, 32};
    double blob_radius = 3.0;   // Gaussian blob width in voxels
    double amplitude = 0.25;    // delta
    double noise_sigma = 0.125; // per-study amplitude noise
    double texture_sigma = 0.03;
    double background = 0.5;
    double balance = 0.5; // P(label = 1)
    std::uint64_t seed = 0;

    /// Throws ConfigError on any violated invariant, including a volume too small
    /// to hold the blob.
    void validate() const;
};

struct SynthLatent {
    int sign = 1;
    double amp_ct = 0.0;
    double amp_pet = 0.0;
    std::array<int, 3> center{0, 0, 0};
};

struct SynthDataset {
    SynthParams params;
    Dataset data;
    std::vector<SynthLatent> latents;
    std::vector<float> lung_mask; // shared by every study, on the dataset grid
};

/// Two ellipsoidal lungs on a (D, H, W) grid.
std::vector<float> synth_lung_mask(std::array<int, 3> shape);

/// Study i draws from a generator seeded with derive_seed(seed, i), so the
/// result does not depend on `workers`.
SynthDataset synth_generate(const SynthParams& p, int workers = 1);

/// Writes raw-unit MVOL volumes (CT stored value v * 2048 with intercept -1024;
/// PET as Bq/ml) plus lung masks and a manifest. Returns the manifest path.
std::filesystem::path export_synth(const SynthDataset& ds, const std::filesystem::path& dir);

} // namespace mfn::data
