// SPDX-License-Identifier: Apache-2.0
#include "mfn/data/folds.hpp"

#include <algorithm>
#include <string>

#include "mfn/common/errors.hpp"
#include "mfn/common/rng.hpp"

namespace mfn::data {

namespace {

void check_labels(std::span<const int> labels) {
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError("labels must be 0 or 1, got " + std::to_string(y));
    }
}

} // namespace

FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k must be at least 2, got " + std::to_string(k));
    check_labels(labels);

    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(k));
    Rng rng(seed);
    for (int c = 0; c < 2; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) members.push_back(i);
        }
        if (members.size() < static_cast<std::size_t>(k)) {
            throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                            " members, fewer than k = " + std::to_string(k));
        }
        rng.shuffle(std::span<std::size_t>(members));

        // Groups receive floor(n/k) members; the r leftover members go to groups
        // floor(j*k/r), spreading them instead of front-loading.
        const std::size_t q = members.size() / static_cast<std::size_t>(k);
        const std::size_t r = members.size() % static_cast<std::size_t>(k);
        std::vector<std::size_t> sizes(static_cast<std::size_t>(k), q);
        for (std::size_t j = 0; j < r; ++j) ++sizes[j * static_cast<std::size_t>(k) / r];
        std::size_t at = 0;
        for (std::size_t g = 0; g < sizes.size(); ++g) {
            groups[g].insert(groups[g].end(), members.begin() + static_cast<std::ptrdiff_t>(at),
                             members.begin() + static_cast<std::ptrdiff_t>(at + sizes[g]));
            at += sizes[g];
        }
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());

    FoldPlan plan{k, seed, {}};
    for (int i = 0; i < k; ++i) {
        Fold fold;
        const auto val = static_cast<std::size_t>((i + 1) % k);
        fold.test = groups[static_cast<std::size_t>(i)];
        fold.validation = groups[val];
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (g == static_cast<std::size_t>(i) || g == val) continue;
            fold.train.insert(fold.train.end(), groups[g].begin(), groups[g].end());
        }
        std::sort(fold.train.begin(), fold.train.end());
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

void validate_plan(const FoldPlan& plan, std::size_t n) {
    if (plan.folds.size() != static_cast<std::size_t>(plan.k)) throw DataError("plan has the wrong number of folds");
    std::vector<int> test_hits(n, 0);
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        std::vector<int> seen(n, 0);
        const auto& fold = plan.folds[f];
        for (const auto* split : {&fold.train, &fold.validation, &fold.test}) {
            for (auto i : *split) {
                if (i >= n) throw DataError("fold " + std::to_string(f) + " references study " + std::to_string(i));
                if (seen[i]++) throw DataError("fold " + std::to_string(f) + " uses study " + std::to_string(i) + " twice");
            }
        }
        if (std::count(seen.begin(), seen.end(), 1) != static_cast<std::ptrdiff_t>(n)) {
            throw DataError("fold " + std::to_string(f) + " does not cover every study");
        }
        for (auto i : fold.test) ++test_hits[i];
    }
    if (std::any_of(test_hits.begin(), test_hits.end(), [](int h) { return h != 1; })) {
        throw DataError("test splits do not partition the dataset");
    }
}

std::array<float, 2> class_weights(std::span<const int> labels) {
    check_labels(labels);
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t n = labels.size();
    if (positives == 0 || positives == n) throw DataError("class weights need both classes present");
    const double total = static_cast<double>(n);
    return {static_cast<float>(total / (2.0 * static_cast<double>(n - positives))),
            static_cast<float>(total / (2.0 * static_cast<double>(positives)))};
}

} // namespace mfn::data
