// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace mfn::data {

/// One preprocessed study: CT and PET intensities in [0, 1] on the dataset grid.
struct Sample {
    std::string id;
    int label = 0; // 0 adenocarcinoma, 1 squamous cell carcinoma
    std::vector<float> ct;
    std::vector<float> pet;
};

struct Dataset {
    std::array<int, 3> shape{0, 0, 0}; // depth, height, width
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t voxels() const;
    std::vector<int> labels() const;

    /// Throws DataError on duplicate ids, bad labels or volumes of the wrong size.
    void validate() const;
};

/// Records which study indices were read through a view.
class AccessLog {
public:
    void record(std::size_t index);
    std::set<std::size_t> touched() const;

private:
    mutable std::mutex mutex_;
    std::set<std::size_t> touched_;
};

/// A dataset restricted to a subset of studies. Reading any other study throws
/// std::logic_error, so a routine handed a view cannot see withheld data.
class DatasetView {
public:
    DatasetView(const Dataset& dataset, std::vector<std::size_t> allowed, AccessLog* log = nullptr);

    const Sample& at(std::size_t index) const;
    int label(std::size_t index) const { return at(index).label; }
    bool contains(std::size_t index) const;
    const std::vector<std::size_t>& indices() const { return allowed_; }
    const std::array<int, 3>& shape() const { return dataset_->shape; }

private:
    const Dataset* dataset_;
    std::vector<std::size_t> allowed_; // sorted
    AccessLog* log_;
};

} // namespace mfn::data
