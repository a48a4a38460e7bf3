// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfn/data/dataset.hpp"
#include "mfn/data/folds.hpp"
#include "mfn/eval/metrics.hpp"
#include "mfn/nets/network.hpp"

namespace mfn::eval {

struct TrainSchedule {
    int epochs = 100;
    double lr = 1e-3;
    int decay_every = 25;
    double decay_factor = 0.1;
    int batch_size = 8;
    int eval_batch_size = 16;
    std::uint64_t seed = 0; // batch shuffling

    void validate() const;
};

struct Prediction {
    std::string id;
    int label = 0;
    double probability = 0.0; // class 1
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0; // mean over training studies
    MetricsRecord validation;
};

struct FoldResult {
    int fold = 0;
    std::vector<Prediction> predictions; // test split; empty when no test split was given
    std::optional<MetricsRecord> test;
    std::vector<EpochRecord> curve;
    int best_validation_epoch = 0; // highest validation AUC; the final epoch's weights are kept
    MetricsRecord final_validation;
};

/// Indices into a view. `test` may be empty (model selection never sees it).
struct FoldData {
    const data::DatasetView* view = nullptr;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

using EpochCallback = std::function<void(int fold, const EpochRecord&)>;

struct TrainedModel {
    nets::Network network;
    FoldResult result;
};

/// Adam with step decay and class-weighted cross-entropy (weights from the
/// training split). Validation metrics are recorded after every epoch and the
/// test split is evaluated once at the end. A non-finite value aborts with a
/// NumericError naming the epoch and batch.
TrainedModel train_model(const nets::ModelConfig& cfg, const FoldData& fold, const TrainSchedule& schedule,
                         int fold_index = 0, const EpochCallback& on_epoch = {});

/// Class-1 probabilities for `indices`, evaluated in inference mode.
std::vector<double> predict(nets::Network& net, const data::DatasetView& view, std::span<const std::size_t> indices,
                            int batch_size = 16);

struct MetricSummary {
    MeanStd accuracy;
    MeanStd auc;
    MeanStd gmean;
};

MetricSummary summarize(std::span<const MetricsRecord> records);

struct CvResult {
    std::string model;
    std::vector<FoldResult> folds;
    MetricSummary summary; // over the test splits
    std::vector<nets::Network> models;
};

/// Trains one model per fold (folds run on up to `workers` threads; results do
/// not depend on the worker count).
CvResult cross_validate(const nets::ModelConfig& cfg, const data::Dataset& dataset, const data::FoldPlan& plan,
                        const TrainSchedule& schedule, int workers = 1, const EpochCallback& on_epoch = {});

struct GridEntry {
    int stages = 0;
    int blocks_per_stage = 0;
    std::int64_t parameter_count = 0;
    std::vector<MetricsRecord> fold_validation;
    MeanStd validation_auc;
    MeanStd validation_gmean;
};

struct GridSearchResult {
    std::vector<GridEntry> ranked;
};

/// Cross-validates every (L, N) on the training and validation splits only.
/// Each fold sees the dataset through a view that withholds its test split;
/// when `fold_logs` is non-empty (one log per fold) every read is recorded.
/// Ranking: validation AUC, then validation Gmean, then fewer parameters.
GridSearchResult grid_search(const data::Dataset& dataset, const data::FoldPlan& plan, const nets::ModelConfig& base,
                             std::span<const int> stage_range, std::span<const int> block_range,
                             const TrainSchedule& schedule, int workers = 1,
                             std::span<data::AccessLog> fold_logs = {});

} // namespace mfn::eval
