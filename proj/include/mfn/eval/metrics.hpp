// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace mfn::eval {

struct MetricsRecord {
    double accuracy = 0.0;
    double auc = 0.0;
    double gmean = 0.0;
    int tp = 0;
    int fp = 0;
    int tn = 0;
    int fn = 0;
    int n = 0;
};

/// Mann-Whitney estimate: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Throws DataError unless both classes occur.
double auc(std::span<const double> scores, std::span<const int> labels);

/// sqrt(sensitivity * specificity). Throws DataError unless both classes occur.
double gmean(std::span<const int> predictions, std::span<const int> labels);

/// Class-1 probabilities -> confusion counts (predicted class 1 iff p > 0.5,
/// the argmax of two logits), accuracy, AUC and Gmean.
MetricsRecord compute_metrics(std::span<const double> probabilities, std::span<const int> labels);

struct WilcoxonResult {
    double statistic = 0.0; // min(W+, W-)
    double p_value = 1.0;   // two-sided
    int n = 0;              // pairs left after dropping zero differences
    bool exact = true;
    bool degenerate = false; // every difference was zero
};

/// Paired signed-rank test. Zero differences are dropped, tied magnitudes get
/// midranks. p is exact (full sign-flip distribution) for n <= 20 and uses the
/// tie-corrected normal approximation with continuity correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation; 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

} // namespace mfn::eval
