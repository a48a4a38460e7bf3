// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mfn/data/dataset.hpp"
#include "mfn/preprocess/preprocess.hpp"

namespace mfn::data {

struct StudyRecord {
    std::string id;
    std::filesystem::path ct_path;
    std::filesystem::path pet_path;
    std::filesystem::path mask_path;
    int label = 0;
    preprocess::AcquisitionMeta meta;
};

/// Relative volume paths resolve against the manifest's directory. Throws
/// DataError on malformed JSON, missing fields, bad labels or duplicate ids.
std::vector<StudyRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<StudyRecord>& records, const std::filesystem::path& path);

/// Reads and preprocesses every study of a manifest.
Dataset load_dataset(const std::filesystem::path& manifest, const preprocess::PipelineOptions& options,
                     int workers = 1);

} // namespace mfn::data
