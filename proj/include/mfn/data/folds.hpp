// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mfn::data {

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

struct FoldPlan {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<Fold> folds;
};

/// Shuffles each class with `seed`, deals it into k stratified groups and uses
/// group i as test and group (i + 1) mod k as validation for fold i.
/// Throws ConfigError for k < 2, DataError if a class has fewer than k members
/// or a label is not 0/1.
FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

/// Throws DataError if a fold overlaps or misses a study, or test sets do not
/// partition the dataset.
void validate_plan(const FoldPlan& plan, std::size_t n);

/// weight[c] = n / (2 n_c). Throws DataError unless both classes are present.
std::array<float, 2> class_weights(std::span<const int> labels);

} // namespace mfn::data
