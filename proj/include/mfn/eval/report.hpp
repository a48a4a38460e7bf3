// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mfn/eval/train.hpp"

namespace mfn::eval {

struct ComparisonReport {
    std::string model_a;
    std::string model_b;
    std::vector<double> auc_a, auc_b;
    std::vector<double> gmean_a, gmean_b;
    MetricSummary summary_a;
    MetricSummary summary_b;
    WilcoxonResult auc_test;
    WilcoxonResult gmean_test;
};

/// Pairs the test metrics fold by fold. Throws DataError when the runs differ
/// in fold count or in the studies of any test split.
ComparisonReport compare_models(const CvResult& a, const CvResult& b);

/// ".724" style: three decimals, no leading zero below one.
std::string format_score(double v);

/// Rows of "model | accuracy | AUC | Gmean", each as mean (std).
std::string format_table(const std::vector<std::pair<std::string, MetricSummary>>& rows);
std::string format_comparison(const ComparisonReport& r);

nlohmann::json to_json(const MetricsRecord& m);
nlohmann::json to_json(const FoldResult& f);
/// Models are not serialised; checkpoints are written separately.
nlohmann::json to_json(const CvResult& r);
nlohmann::json to_json(const ComparisonReport& r);
nlohmann::json to_json(const GridSearchResult& r);

MetricsRecord metrics_from_json(const nlohmann::json& j);
FoldResult fold_from_json(const nlohmann::json& j);
CvResult cv_from_json(const nlohmann::json& j);

/// model,fold,accuracy,auc,gmean
std::string metrics_csv(const std::vector<const CvResult*>& results);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace mfn::eval
