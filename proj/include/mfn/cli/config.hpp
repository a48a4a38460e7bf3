// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include "mfn/data/synth.hpp"
#include "mfn/eval/train.hpp"
#include "mfn/nets/model_config.hpp"
#include "mfn/preprocess/preprocess.hpp"

namespace mfn::cli {

/// Everything a run depends on. Parsed from JSON with every default expanded,
/// so the resolved form replays the run exactly.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> manifest; // exactly one of manifest / synth
    std::optional<data::SynthParams> synth;
    preprocess::PipelineOptions preprocess;
    nets::ModelConfig model;
    int k = 5;
    std::uint64_t fold_seed = 0;
    eval::TrainSchedule training;
    std::vector<int> grid_stages{1, 2, 3, 4, 5};
    std::vector<int> grid_blocks{1, 2, 3, 4, 5};
    std::filesystem::path output_dir;

    /// Volume shape the network sees.
    std::array<int, 3> input_shape() const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<nets::Strategy> strategy;
    std::optional<std::filesystem::path> output_dir;
};

/// Throws ConfigError on malformed or inconsistent configuration. A top-level
/// "seed" is mandatory; sub-seeds left out are derived from it. Relative paths
/// resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// Resolved configuration. The output directory is a path choice, not part of
/// the experiment, and is left out.
nlohmann::json to_json(const ExperimentConfig& c);

} // namespace mfn::cli
