// SPDX-License-Identifier: Apache-2.0
#include "mfn/eval/report.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mfn/common/errors.hpp"

namespace mfn::eval {

using nlohmann::json;

namespace {

std::string cell(const MeanStd& m) { return format_score(m.mean) + " (" + format_score(m.std) + ")"; }

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

json summary_json(const MetricSummary& s) {
    auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
    return {{"accuracy", ms(s.accuracy)}, {"auc", ms(s.auc)}, {"gmean", ms(s.gmean)}};
}

json wilcoxon_json(const WilcoxonResult& w) {
    return {{"statistic", w.statistic}, {"p_value", w.p_value}, {"n", w.n}, {"exact", w.exact},
            {"degenerate", w.degenerate}};
}

} // namespace

ComparisonReport compare_models(const CvResult& a, const CvResult& b) {
    if (a.folds.size() != b.folds.size()) {
        throw DataError("cannot compare runs with " + std::to_string(a.folds.size()) + " and " +
                        std::to_string(b.folds.size()) + " folds");
    }
    ComparisonReport r;
    r.model_a = a.model;
    r.model_b = b.model;
    std::vector<MetricsRecord> ma, mb;
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        const auto& fa = a.folds[f];
        const auto& fb = b.folds[f];
        if (!fa.test || !fb.test) throw DataError("fold " + std::to_string(f) + " has no test metrics");
        bool same_split = fa.predictions.size() == fb.predictions.size();
        for (std::size_t i = 0; same_split && i < fa.predictions.size(); ++i) {
            same_split = fa.predictions[i].id == fb.predictions[i].id;
        }
        if (!same_split) throw DataError("fold " + std::to_string(f) + " used different test studies in the two runs");
        r.auc_a.push_back(fa.test->auc);
        r.auc_b.push_back(fb.test->auc);
        r.gmean_a.push_back(fa.test->gmean);
        r.gmean_b.push_back(fb.test->gmean);
        ma.push_back(*fa.test);
        mb.push_back(*fb.test);
    }
    if (ma.empty()) throw DataError("runs contain no folds");
    r.summary_a = summarize(ma);
    r.summary_b = summarize(mb);
    r.auc_test = wilcoxon_signed_rank(r.auc_a, r.auc_b);
    r.gmean_test = wilcoxon_signed_rank(r.gmean_a, r.gmean_b);
    return r;
}

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    std::string s = buf;
    if (s.rfind("0.", 0) == 0) s.erase(0, 1);
    if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
    return s;
}

std::string format_table(const std::vector<std::pair<std::string, MetricSummary>>& rows) {
    std::size_t width = 5;
    for (const auto& [name, _] : rows) width = std::max(width, name.size());
    std::ostringstream out;
    out << pad("Model", width) << " | " << pad("Accuracy", 12) << " | " << pad("AUC", 12) << " | Gmean\n";
    out << std::string(width, '-') << "-+-" << std::string(12, '-') << "-+-" << std::string(12, '-') << "-+-"
        << std::string(12, '-') << '\n';
    for (const auto& [name, s] : rows) {
        out << pad(name, width) << " | " << pad(cell(s.accuracy), 12) << " | " << pad(cell(s.auc), 12) << " | "
            << cell(s.gmean) << '\n';
    }
    return out.str();
}

std::string format_comparison(const ComparisonReport& r) {
    std::ostringstream out;
    out << format_table({{r.model_a, r.summary_a}, {r.model_b, r.summary_b}});
    char line[160];
    std::snprintf(line, sizeof(line), "Wilcoxon signed-rank (two-sided, n=%d): AUC W=%.1f p=%.4f%s\n", r.auc_test.n,
                  r.auc_test.statistic, r.auc_test.p_value, r.auc_test.degenerate ? " (all differences zero)" : "");
    out << line;
    std::snprintf(line, sizeof(line), "Wilcoxon signed-rank (two-sided, n=%d): Gmean W=%.1f p=%.4f%s\n",
                  r.gmean_test.n, r.gmean_test.statistic, r.gmean_test.p_value,
                  r.gmean_test.degenerate ? " (all differences zero)" : "");
    out << line;
    return out.str();
}

json to_json(const MetricsRecord& m) {
    return {{"accuracy", m.accuracy}, {"auc", m.auc}, {"gmean", m.gmean}, {"tp", m.tp},
            {"fp", m.fp},             {"tn", m.tn},   {"fn", m.fn},       {"n", m.n}};
}

json to_json(const FoldResult& f) {
    json preds = json::array();
    for (const auto& p : f.predictions) preds.push_back({{"id", p.id}, {"label", p.label}, {"probability", p.probability}});
    json curve = json::array();
    for (const auto& e : f.curve) {
        curve.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss},
                         {"validation", to_json(e.validation)}});
    }
    json j{{"fold", f.fold},
           {"predictions", std::move(preds)},
           {"curve", std::move(curve)},
           {"best_validation_epoch", f.best_validation_epoch},
           {"final_validation", to_json(f.final_validation)}};
    j["test"] = f.test ? to_json(*f.test) : json(nullptr);
    return j;
}

json to_json(const CvResult& r) {
    json folds = json::array();
    for (const auto& f : r.folds) folds.push_back(to_json(f));
    return {{"model", r.model}, {"summary", summary_json(r.summary)}, {"folds", std::move(folds)}};
}

json to_json(const ComparisonReport& r) {
    return {{"model_a", r.model_a},
            {"model_b", r.model_b},
            {"auc", {{"a", r.auc_a}, {"b", r.auc_b}, {"wilcoxon", wilcoxon_json(r.auc_test)}}},
            {"gmean", {{"a", r.gmean_a}, {"b", r.gmean_b}, {"wilcoxon", wilcoxon_json(r.gmean_test)}}},
            {"summary_a", summary_json(r.summary_a)},
            {"summary_b", summary_json(r.summary_b)}};
}

json to_json(const GridSearchResult& r) {
    json ranked = json::array();
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        const auto& e = r.ranked[i];
        json folds = json::array();
        for (const auto& m : e.fold_validation) folds.push_back(to_json(m));
        ranked.push_back({{"rank", i + 1},
                          {"stages", e.stages},
                          {"blocks_per_stage", e.blocks_per_stage},
                          {"parameter_count", e.parameter_count},
                          {"validation_auc", {{"mean", e.validation_auc.mean}, {"std", e.validation_auc.std}}},
                          {"validation_gmean", {{"mean", e.validation_gmean.mean}, {"std", e.validation_gmean.std}}},
                          {"fold_validation", std::move(folds)}});
    }
    return {{"ranked", std::move(ranked)}};
}

MetricsRecord metrics_from_json(const json& j) {
    MetricsRecord m;
    m.accuracy = j.at("accuracy").get<double>();
    m.auc = j.at("auc").get<double>();
    m.gmean = j.at("gmean").get<double>();
    m.tp = j.at("tp").get<int>();
    m.fp = j.at("fp").get<int>();
    m.tn = j.at("tn").get<int>();
    m.fn = j.at("fn").get<int>();
    m.n = j.at("n").get<int>();
    return m;
}

FoldResult fold_from_json(const json& j) {
    FoldResult f;
    f.fold = j.at("fold").get<int>();
    for (const auto& p : j.at("predictions")) {
        f.predictions.push_back({p.at("id").get<std::string>(), p.at("label").get<int>(), p.at("probability").get<double>()});
    }
    for (const auto& e : j.at("curve")) {
        f.curve.push_back({e.at("epoch").get<int>(), e.at("lr").get<double>(), e.at("train_loss").get<double>(),
                           metrics_from_json(e.at("validation"))});
    }
    f.best_validation_epoch = j.at("best_validation_epoch").get<int>();
    f.final_validation = metrics_from_json(j.at("final_validation"));
    if (!j.at("test").is_null()) f.test = metrics_from_json(j.at("test"));
    return f;
}

CvResult cv_from_json(const json& j) {
    try {
        CvResult r;
        r.model = j.at("model").get<std::string>();
        std::vector<MetricsRecord> tests;
        for (const auto& f : j.at("folds")) {
            r.folds.push_back(fold_from_json(f));
            if (!r.folds.back().test) throw DataError("fold without test metrics in results");
            tests.push_back(*r.folds.back().test);
        }
        if (tests.empty()) throw DataError("results contain no folds");
        r.summary = summarize(tests);
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed results file: ") + e.what());
    }
}

std::string metrics_csv(const std::vector<const CvResult*>& results) {
    std::ostringstream out;
    out << "model,fold,accuracy,auc,gmean\n";
    char line[256];
    for (const auto* r : results) {
        for (const auto& f : r->folds) {
            if (!f.test) continue;
            std::snprintf(line, sizeof(line), "%s,%d,%.17g,%.17g,%.17g\n", r->model.c_str(), f.fold, f.test->accuracy,
                          f.test->auc, f.test->gmean);
            out << line;
        }
    }
    return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace mfn::eval
