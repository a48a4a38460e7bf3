// SPDX-License-Identifier: Apache-2.0
#include "mfn/data/dataset.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "mfn/common/errors.hpp"

namespace mfn::data {

std::size_t Dataset::voxels() const {
    return static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(shape[2]);
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

void Dataset::validate() const {
    std::unordered_set<std::string> ids;
    const std::size_t n = voxels();
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second) throw DataError("duplicate study id '" + s.id + "'");
        if (s.label != 0 && s.label != 1) throw DataError("study '" + s.id + "' has a label other than 0/1");
        if (s.ct.size() != n || s.pet.size() != n) {
            throw DataError("study '" + s.id + "' does not match the dataset shape");
        }
    }
}

void AccessLog::record(std::size_t index) {
    std::lock_guard lock(mutex_);
    touched_.insert(index);
}

std::set<std::size_t> AccessLog::touched() const {
    std::lock_guard lock(mutex_);
    return touched_;
}

DatasetView::DatasetView(const Dataset& dataset, std::vector<std::size_t> allowed, AccessLog* log)
    : dataset_(&dataset), allowed_(std::move(allowed)), log_(log) {
    std::sort(allowed_.begin(), allowed_.end());
    allowed_.erase(std::unique(allowed_.begin(), allowed_.end()), allowed_.end());
    if (!allowed_.empty() && allowed_.back() >= dataset.size()) throw DataError("view references a missing study");
}

bool DatasetView::contains(std::size_t index) const {
    return std::binary_search(allowed_.begin(), allowed_.end(), index);
}

const Sample& DatasetView::at(std::size_t index) const {
    if (!contains(index)) throw std::logic_error("study " + std::to_string(index) + " is withheld from this view");
    if (log_) log_->record(index);
    return dataset_->samples[index];
}

} // namespace mfn::data
