// SPDX-License-Identifier: Apache-2.0
#include "mfn/eval/train.hpp"

#include <algorithm>
#include <cmath>

#include "mfn/common/errors.hpp"
#include "mfn/common/parallel.hpp"
#include "mfn/common/rng.hpp"
#include "mfn/tensor/optim.hpp"

namespace mfn::eval {

namespace {

using tensor::Tensor;

nets::ModalityBatch make_batch(const nets::Network& net, const data::DatasetView& view,
                               std::span<const std::size_t> indices) {
    const auto& shape = view.shape();
    const auto voxels = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
    const tensor::Shape batch_shape{static_cast<std::int64_t>(indices.size()), 1, shape[0], shape[1], shape[2]};
    std::vector<float> ct, pet;
    if (net.needs_ct()) ct.reserve(indices.size() * voxels);
    if (net.needs_pet()) pet.reserve(indices.size() * voxels);
    for (auto i : indices) {
        const auto& s = view.at(i);
        if (net.needs_ct()) ct.insert(ct.end(), s.ct.begin(), s.ct.end());
        if (net.needs_pet()) pet.insert(pet.end(), s.pet.begin(), s.pet.end());
    }
    nets::ModalityBatch batch;
    if (net.needs_ct()) batch.ct = Tensor::from_values(batch_shape, std::move(ct));
    if (net.needs_pet()) batch.pet = Tensor::from_values(batch_shape, std::move(pet));
    return batch;
}

std::vector<int> labels_of(const data::DatasetView& view, std::span<const std::size_t> indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(view.label(i));
    return out;
}

MetricsRecord evaluate(nets::Network& net, const data::DatasetView& view, std::span<const std::size_t> indices,
                       int batch_size) {
    const auto probs = predict(net, view, indices, batch_size);
    return compute_metrics(probs, labels_of(view, indices));
}

} // namespace

void TrainSchedule::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (decay_every < 1) throw ConfigError("decay_every must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay_factor must lie in (0, 1]");
    if (batch_size < 1 || eval_batch_size < 1) throw ConfigError("batch sizes must be positive");
}

std::vector<double> predict(nets::Network& net, const data::DatasetView& view, std::span<const std::size_t> indices,
                            int batch_size) {
    const auto previous = net.mode();
    net.set_mode(tensor::Mode::inference);
    std::vector<double> out;
    out.reserve(indices.size());
    for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(batch_size)) {
        const auto chunk = indices.subspan(at, std::min<std::size_t>(static_cast<std::size_t>(batch_size), indices.size() - at));
        for (float p : net.predict_proba(make_batch(net, view, chunk))) out.push_back(p);
    }
    net.set_mode(previous);
    return out;
}

TrainedModel train_model(const nets::ModelConfig& cfg, const FoldData& fold, const TrainSchedule& schedule,
                         int fold_index, const EpochCallback& on_epoch) {
    schedule.validate();
    if (!fold.view) throw ConfigError("fold has no dataset view");
    if (fold.train.empty() || fold.validation.empty()) throw DataError("training and validation splits must be non-empty");
    const auto& view = *fold.view;

    nets::Network net(cfg);
    auto params = net.parameter_tensors();
    tensor::AdamState adam;
    adam.options.lr = schedule.lr;
    const auto train_labels = labels_of(view, fold.train);
    const auto weights = data::class_weights(train_labels);
    const tensor::StepSchedule decay{schedule.decay_every, schedule.decay_factor};

    FoldResult result;
    result.fold = fold_index;
    double best_auc = -1.0;
    std::vector<std::size_t> order = fold.train;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        adam.options.lr = tensor::lr_at_epoch(schedule.lr, epoch, decay);
        Rng rng(derive_seed(derive_seed(schedule.seed, static_cast<std::uint64_t>(fold_index)),
                            static_cast<std::uint64_t>(epoch)));
        std::sort(order.begin(), order.end());
        rng.shuffle(std::span<std::size_t>(order));

        net.set_mode(tensor::Mode::training);
        double loss_sum = 0.0;
        int batch_index = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(schedule.batch_size), ++batch_index) {
            const auto chunk = std::span<const std::size_t>(order).subspan(
                at, std::min<std::size_t>(static_cast<std::size_t>(schedule.batch_size), order.size() - at));
            const auto labels = labels_of(view, chunk);
            try {
                tensor::zero_grads(params);
                auto loss = net.training_loss(make_batch(net, view, chunk), labels, weights);
                const float value = loss.item();
                if (!std::isfinite(value)) throw NumericError("loss is " + std::to_string(value));
                tensor::backward(loss);
                tensor::adam_step(adam, params);
                loss_sum += static_cast<double>(value) * static_cast<double>(chunk.size());
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.lr = adam.options.lr;
        record.train_loss = loss_sum / static_cast<double>(order.size());
        record.validation = evaluate(net, view, fold.validation, schedule.eval_batch_size);
        if (record.validation.auc > best_auc) {
            best_auc = record.validation.auc;
            result.best_validation_epoch = epoch;
        }
        result.curve.push_back(record);
        if (on_epoch) on_epoch(fold_index, record);
    }
    result.final_validation = result.curve.back().validation;

    if (!fold.test.empty()) {
        const auto probs = predict(net, view, fold.test, schedule.eval_batch_size);
        const auto labels = labels_of(view, fold.test);
        for (std::size_t i = 0; i < fold.test.size(); ++i) {
            result.predictions.push_back({view.at(fold.test[i]).id, labels[i], probs[i]});
        }
        result.test = compute_metrics(probs, labels);
    }
    net.set_mode(tensor::Mode::inference);
    return {std::move(net), std::move(result)};
}

MetricSummary summarize(std::span<const MetricsRecord> records) {
    std::vector<double> acc, auc_values, gm;
    for (const auto& r : records) {
        acc.push_back(r.accuracy);
        auc_values.push_back(r.auc);
        gm.push_back(r.gmean);
    }
    return {mean_std(acc), mean_std(auc_values), mean_std(gm)};
}

CvResult cross_validate(const nets::ModelConfig& cfg, const data::Dataset& dataset, const data::FoldPlan& plan,
                        const TrainSchedule& schedule, int workers, const EpochCallback& on_epoch) {
    data::validate_plan(plan, dataset.size());
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const data::DatasetView view(dataset, all);

    std::vector<std::optional<TrainedModel>> trained(plan.folds.size());
    parallel_for(plan.folds.size(), workers, [&](std::size_t f) {
        const auto& fold = plan.folds[f];
        trained[f].emplace(train_model(cfg, {&view, fold.train, fold.validation, fold.test}, schedule,
                                       static_cast<int>(f), on_epoch));
    });

    CvResult out;
    out.model = std::string(nets::to_string(cfg.strategy));
    std::vector<MetricsRecord> tests;
    for (auto& t : trained) {
        tests.push_back(*t->result.test);
        out.folds.push_back(std::move(t->result));
        out.models.push_back(std::move(t->network));
    }
    out.summary = summarize(tests);
    return out;
}

GridSearchResult grid_search(const data::Dataset& dataset, const data::FoldPlan& plan, const nets::ModelConfig& base,
                             std::span<const int> stage_range, std::span<const int> block_range,
                             const TrainSchedule& schedule, int workers, std::span<data::AccessLog> fold_logs) {
    data::validate_plan(plan, dataset.size());
    if (!fold_logs.empty() && fold_logs.size() != plan.folds.size()) {
        throw ConfigError("grid search needs one access log per fold");
    }
    for (int v : stage_range) {
        if (v < 1 || v > 5) throw ConfigError("stage range must lie in [1, 5]");
    }
    for (int v : block_range) {
        if (v < 1 || v > 5) throw ConfigError("block range must lie in [1, 5]");
    }

    // The search routine only ever holds views without the test split.
    std::vector<data::DatasetView> views;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        auto allowed = plan.folds[f].train;
        allowed.insert(allowed.end(), plan.folds[f].validation.begin(), plan.folds[f].validation.end());
        views.emplace_back(dataset, std::move(allowed), fold_logs.empty() ? nullptr : &fold_logs[f]);
    }

    std::vector<GridEntry> entries;
    for (int l : stage_range) {
        for (int n : block_range) {
            GridEntry e;
            e.stages = l;
            e.blocks_per_stage = n;
            entries.push_back(e);
        }
    }
    const std::size_t k = plan.folds.size();
    std::vector<MetricsRecord> cells(entries.size() * k);
    std::vector<std::int64_t> counts(entries.size());
    parallel_for(cells.size(), workers, [&](std::size_t job) {
        const std::size_t c = job / k;
        const std::size_t f = job % k;
        auto cfg = base;
        cfg.stages = entries[c].stages;
        cfg.blocks_per_stage = entries[c].blocks_per_stage;
        auto trained = train_model(cfg, {&views[f], plan.folds[f].train, plan.folds[f].validation, {}}, schedule,
                                   static_cast<int>(f));
        cells[job] = trained.result.final_validation;
        if (f == 0) counts[c] = trained.network.parameter_count();
    });
    for (std::size_t c = 0; c < entries.size(); ++c) {
        auto& e = entries[c];
        e.parameter_count = counts[c];
        e.fold_validation.assign(cells.begin() + static_cast<std::ptrdiff_t>(c * k),
                                 cells.begin() + static_cast<std::ptrdiff_t>((c + 1) * k));
        const auto s = summarize(e.fold_validation);
        e.validation_auc = s.auc;
        e.validation_gmean = s.gmean;
    }
    std::stable_sort(entries.begin(), entries.end(), [](const GridEntry& a, const GridEntry& b) {
        if (a.validation_auc.mean != b.validation_auc.mean) return a.validation_auc.mean > b.validation_auc.mean;
        if (a.validation_gmean.mean != b.validation_gmean.mean) return a.validation_gmean.mean > b.validation_gmean.mean;
        return a.parameter_count < b.parameter_count;
    });
    return {std::move(entries)};
}

} // namespace mfn::eval
