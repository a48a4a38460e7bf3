// SPDX-License-Identifier: Apache-2.0
#include "mfn/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "mfn/common/errors.hpp"

namespace mfn::eval {

namespace {

void check_binary(std::span<const int> labels, std::size_t expected, const char* what) {
    if (labels.size() != expected) throw DataError(std::string(what) + ": length mismatch");
    bool seen[2] = {false, false};
    for (int y : labels) {
        if (y != 0 && y != 1) throw DataError(std::string(what) + ": labels must be 0 or 1");
        seen[y] = true;
    }
    if (!seen[0] || !seen[1]) throw DataError(std::string(what) + " needs both classes present");
}

// Doubled midranks (1-based) of `values`; ties share the mean of their positions.
std::vector<std::int64_t> doubled_midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::int64_t> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const auto r2 = static_cast<std::int64_t>(i + 1 + j + 1); // (first + last) rank
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r2;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
    check_binary(labels, scores.size(), "auc");
    for (double s : scores) {
        if (std::isnan(s)) throw DataError("auc: NaN score");
    }
    const auto ranks = doubled_midranks(scores);
    std::int64_t positives = 0;
    std::int64_t rank_sum2 = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            ++positives;
            rank_sum2 += ranks[i];
        }
    }
    const std::int64_t negatives = static_cast<std::int64_t>(labels.size()) - positives;
    // Twice the Mann-Whitney U of the positives.
    const std::int64_t u2 = rank_sum2 - positives * (positives + 1);
    return static_cast<double>(u2) / static_cast<double>(2 * positives * negatives);
}

double gmean(std::span<const int> predictions, std::span<const int> labels) {
    check_binary(labels, predictions.size(), "gmean");
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            (predictions[i] == 1 ? tp : fn) += 1;
        } else {
            (predictions[i] == 1 ? fp : tn) += 1;
        }
    }
    return std::sqrt(tp / (tp + fn) * (tn / (tn + fp)));
}

MetricsRecord compute_metrics(std::span<const double> probabilities, std::span<const int> labels) {
    check_binary(labels, probabilities.size(), "compute_metrics");
    MetricsRecord m;
    std::vector<int> predictions(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = probabilities[i];
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("probabilities must lie in [0, 1]");
        predictions[i] = p > 0.5 ? 1 : 0;
        if (labels[i] == 1) {
            ++(predictions[i] == 1 ? m.tp : m.fn);
        } else {
            ++(predictions[i] == 1 ? m.fp : m.tn);
        }
    }
    m.n = static_cast<int>(labels.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / m.n;
    m.auc = auc(probabilities, labels);
    m.gmean = gmean(predictions, labels);
    return m;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("wilcoxon: samples differ in length");
    std::vector<double> magnitude;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (std::isnan(d)) throw DataError("wilcoxon: NaN difference");
        if (d == 0.0) continue;
        magnitude.push_back(std::abs(d));
        positive.push_back(d > 0.0);
    }
    WilcoxonResult r;
    r.n = static_cast<int>(magnitude.size());
    if (r.n == 0) {
        r.degenerate = true;
        return r;
    }
    const auto ranks = doubled_midranks(magnitude);
    const std::int64_t total2 = static_cast<std::int64_t>(r.n) * (r.n + 1); // 2 * n(n+1)/2
    std::int64_t w_plus2 = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (positive[i]) w_plus2 += ranks[i];
    }
    r.statistic = static_cast<double>(std::min(w_plus2, total2 - w_plus2)) / 2.0;
    // Deviations from the null mean, kept doubled so they stay integral.
    const std::int64_t observed = std::abs(2 * w_plus2 - total2);

    if (r.n <= 20) {
        // Null distribution of the doubled W+ over all 2^n sign assignments.
        std::vector<std::uint64_t> count(static_cast<std::size_t>(total2 + 1), 0);
        count[0] = 1;
        std::int64_t reach = 0;
        for (auto rank2 : ranks) {
            for (std::int64_t s = reach; s >= 0; --s) {
                if (count[static_cast<std::size_t>(s)]) count[static_cast<std::size_t>(s + rank2)] += count[static_cast<std::size_t>(s)];
            }
            reach += rank2;
        }
        std::uint64_t extreme = 0;
        for (std::int64_t s = 0; s <= total2; ++s) {
            if (std::abs(2 * s - total2) >= observed) extreme += count[static_cast<std::size_t>(s)];
        }
        r.p_value = std::ldexp(static_cast<double>(extreme), -r.n);
        r.exact = true;
    } else {
        const double n = r.n;
        double variance = n * (n + 1) * (2 * n + 1) / 24.0;
        std::vector<std::int64_t> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i);
            variance -= (t * t * t - t) / 48.0;
            i = j;
        }
        const double deviation = std::max(0.0, static_cast<double>(observed) / 4.0 - 0.5);
        r.p_value = variance > 0.0 ? std::min(1.0, std::erfc(deviation / std::sqrt(variance) / std::sqrt(2.0))) : 1.0;
        r.exact = false;
    }
    return r;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw DataError("mean_std of an empty sample");
    MeanStd out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

} // namespace mfn::eval
