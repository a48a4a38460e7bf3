// SPDX-License-Identifier: Apache-2.0
#include "mfn/cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfn/cli/config.hpp"
#include "mfn/common/errors.hpp"
#include "mfn/common/parallel.hpp"
#include "mfn/data/folds.hpp"
#include "mfn/data/manifest.hpp"
#include "mfn/data/mvol.hpp"
#include "mfn/data/synth.hpp"
#include "mfn/eval/report.hpp"
#include "mfn/fusiongraph/fusion_graph.hpp"
#include "mfn/nets/checkpoint.hpp"

namespace mfn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string strategy;
    std::string run_a;
    std::string run_b;
    int fold = 0;
};

class Progress {
public:
    explicit Progress(std::ostream& err) : err_(err) {}

    void line(const std::string& text) {
        std::lock_guard lock(mutex_);
        err_ << text << '\n' << std::flush;
    }

    eval::EpochCallback epoch_callback(std::string label) {
        return [this, label = std::move(label)](int fold, const eval::EpochRecord& r) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s fold %d epoch %d lr %.2g loss %.4f val auc %.3f gmean %.3f",
                          label.c_str(), fold, r.epoch, r.lr, r.train_loss, r.validation.auc, r.validation.gmean);
            line(buf);
        };
    }

private:
    std::mutex mutex_;
    std::ostream& err_;
};

ExperimentConfig load(const Flags& f) {
    if (f.config.empty()) throw ConfigError("--config is required");
    Overrides o;
    o.seed = f.seed;
    if (!f.strategy.empty()) o.strategy = nets::parse_strategy(f.strategy);
    if (!f.out.empty()) o.output_dir = f.out;
    return load_config(f.config, o);
}

fs::path prepare_output(const ExperimentConfig& c) {
    if (c.output_dir.empty()) throw ConfigError("no output directory: pass --out or set \"output_dir\"");
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec) throw DataError("cannot create " + c.output_dir.string() + ": " + ec.message());
    eval::write_text(c.output_dir / "config.resolved.json", to_json(c).dump(2) + "\n");
    return c.output_dir;
}

void write_json(const fs::path& path, const json& j) { eval::write_text(path, j.dump(2) + "\n"); }

data::Dataset load_data(const ExperimentConfig& c, int workers, Progress& progress) {
    if (c.synth) {
        progress.line("generating " + std::to_string(c.synth->n_studies) + " synthetic studies");
        return data::synth_generate(*c.synth, workers).data;
    }
    progress.line("loading " + c.manifest->string());
    return data::load_dataset(*c.manifest, c.preprocess, workers);
}

std::string run_label(const ExperimentConfig& c) { return std::string(nets::to_string(c.model.strategy)); }

int cmd_synth(const Flags& f, std::ostream& out, Progress& progress) {
    const auto c = load(f);
    if (!c.synth) throw ConfigError("synth needs a \"dataset.synth\" section");
    const auto dir = prepare_output(c);
    const auto ds = data::synth_generate(*c.synth, f.workers);
    const auto manifest = data::export_synth(ds, dir);
    progress.line("wrote " + std::to_string(ds.data.size()) + " studies");
    out << manifest.string() << '\n';
    return exit_ok;
}

int cmd_preprocess(const Flags& f, std::ostream& out, Progress& progress) {
    const auto c = load(f);
    if (!c.manifest) throw ConfigError("preprocess needs a \"dataset.manifest\"");
    const auto dir = prepare_output(c);
    const auto records = data::read_manifest(*c.manifest);
    fs::create_directories(dir / "volumes");
    std::vector<preprocess::CropBox> boxes(records.size());
    parallel_for(records.size(), f.workers, [&](std::size_t i) {
        const auto& r = records[i];
        const auto pair = preprocess::preprocess_study(data::read_mvol(r.ct_path), data::read_mvol(r.pet_path),
                                                       data::read_mvol(r.mask_path), r.meta, c.preprocess);
        data::write_mvol(pair.ct, dir / "volumes" / (r.id + "_ct.mvol"));
        data::write_mvol(pair.pet, dir / "volumes" / (r.id + "_pet.mvol"));
        data::write_mvol(pair.mask, dir / "volumes" / (r.id + "_mask.mvol"));
        boxes[i] = pair.crop_box;
    });
    json studies = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        studies.push_back({{"id", r.id},
                           {"label", r.label},
                           {"ct", "volumes/" + r.id + "_ct.mvol"},
                           {"pet", "volumes/" + r.id + "_pet.mvol"},
                           {"mask", "volumes/" + r.id + "_mask.mvol"},
                           {"crop_begin", boxes[i].begin},
                           {"crop_end", boxes[i].end}});
    }
    write_json(dir / "preprocessed.json", {{"out_shape", c.preprocess.out_shape}, {"studies", studies}});
    progress.line("preprocessed " + std::to_string(records.size()) + " studies");
    out << (dir / "preprocessed.json").string() << '\n';
    return exit_ok;
}

int cmd_train(const Flags& f, std::ostream& out, Progress& progress) {
    const auto c = load(f);
    const auto dir = prepare_output(c);
    const auto dataset = load_data(c, f.workers, progress);
    const auto plan = data::stratified_kfold(dataset.labels(), c.k, c.fold_seed);
    if (f.fold < 0 || f.fold >= c.k) throw ConfigError("--fold must lie in [0, k)");
    const auto& split = plan.folds[static_cast<std::size_t>(f.fold)];

    std::vector<std::size_t> allowed;
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
        allowed.insert(allowed.end(), part->begin(), part->end());
    }
    const data::DatasetView view(dataset, allowed);
    eval::FoldData fold{&view, split.train, split.validation, split.test};
    auto trained = eval::train_model(c.model, fold, c.training, f.fold, progress.epoch_callback(run_label(c)));

    nets::save_checkpoint(trained.network, dir / "model.fnet");
    write_json(dir / "fold_result.json", eval::to_json(trained.result));
    if (trained.result.test) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "fold %d test accuracy %s AUC %s Gmean %s\n", f.fold,
                      eval::format_score(trained.result.test->accuracy).c_str(),
                      eval::format_score(trained.result.test->auc).c_str(),
                      eval::format_score(trained.result.test->gmean).c_str());
        out << buf;
    }
    return exit_ok;
}

int cmd_cv(const Flags& f, std::ostream& out, Progress& progress) {
    const auto c = load(f);
    const auto dir = prepare_output(c);
    const auto dataset = load_data(c, f.workers, progress);
    const auto plan = data::stratified_kfold(dataset.labels(), c.k, c.fold_seed);
    auto result = eval::cross_validate(c.model, dataset, plan, c.training, f.workers,
                                       progress.epoch_callback(run_label(c)));

    write_json(dir / "metrics.json", eval::to_json(result));
    eval::write_text(dir / "metrics.csv", eval::metrics_csv({&result}));
    for (std::size_t i = 0; i < result.models.size(); ++i) {
        nets::save_checkpoint(result.models[i], dir / ("fold_" + std::to_string(i) + ".fnet"));
    }
    const auto table = eval::format_table({{result.model, result.summary}});
    eval::write_text(dir / "table.txt", table);
    out << table;
    return exit_ok;
}

int cmd_gridsearch(const Flags& f, std::ostream& out, Progress& progress) {
    const auto c = load(f);
    const auto dir = prepare_output(c);
    const auto dataset = load_data(c, f.workers, progress);
    const auto plan = data::stratified_kfold(dataset.labels(), c.k, c.fold_seed);
    progress.line("grid search over " + std::to_string(c.grid_stages.size() * c.grid_blocks.size()) +
                  " configurations");
    const auto result =
        eval::grid_search(dataset, plan, c.model, c.grid_stages, c.grid_blocks, c.training, f.workers);
    write_json(dir / "gridsearch.json", eval::to_json(result));
    for (std::size_t i = 0; i < result.ranked.size(); ++i) {
        const auto& e = result.ranked[i];
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu. L=%d N=%d  val AUC %s (%s)  Gmean %s (%s)  params %lld\n", i + 1,
                      e.stages, e.blocks_per_stage, eval::format_score(e.validation_auc.mean).c_str(),
                      eval::format_score(e.validation_auc.std).c_str(),
                      eval::format_score(e.validation_gmean.mean).c_str(),
                      eval::format_score(e.validation_gmean.std).c_str(),
                      static_cast<long long>(e.parameter_count));
        out << buf;
    }
    return exit_ok;
}

eval::CvResult read_run(const std::string& dir) {
    const fs::path p = fs::path(dir) / "metrics.json";
    if (!fs::exists(p)) throw DataError("no metrics.json in " + dir);
    try {
        return eval::cv_from_json(json::parse(eval::read_text(p)));
    } catch (const json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

int cmd_compare(const Flags& f, std::ostream& out, Progress&) {
    if (f.run_a.empty() || f.run_b.empty()) throw ConfigError("compare needs --a and --b");
    const auto a = read_run(f.run_a);
    const auto b = read_run(f.run_b);
    const auto report = eval::compare_models(a, b);
    const auto text = eval::format_comparison(report);
    if (!f.out.empty()) {
        fs::create_directories(f.out);
        write_json(fs::path(f.out) / "comparison.json", eval::to_json(report));
        eval::write_text(fs::path(f.out) / "comparison.txt", text);
    }
    out << text;
    return exit_ok;
}

int cmd_verify_graph(const Flags& f, std::ostream& out, Progress&) {
    auto c = load(f);
    if (c.model.strategy != nets::Strategy::multistage) {
        throw ConfigError("verify-graph needs the multistage strategy");
    }
    const auto dir = prepare_output(c);
    const auto graph = fusiongraph::enumerate_fusions(c.model.stages, c.model.blocks_per_stage);
    // Tracing needs only a divisible input; the smallest one keeps it cheap.
    const int side = 1 << c.model.stages;
    c.model.input_shape = {side, side, side};
    auto net = nets::build_network(c.model);
    const auto report = fusiongraph::verify_against_network(graph, net);
    write_json(dir / "graph.json", fusiongraph::to_json(graph));
    write_json(dir / "verification.json", {{"match", report.match},
                                           {"expected_events", report.expected_events},
                                           {"observed_events", report.observed_events},
                                           {"mismatches", report.mismatches}});
    for (const auto& e : graph.events) {
        out << 'F' << e.index << " = " << fusiongraph::to_string(e.op) << '(';
        for (std::size_t i = 0; i < e.inputs.size(); ++i) {
            const int s = e.inputs[i].source;
            out << (i ? ", " : "") << (s == fusiongraph::ct_input ? "x1" : s == fusiongraph::pet_input ? "x2" : "F" + std::to_string(s))
                << '^' << e.inputs[i].depth;
        }
        out << ")\n";
    }
    if (!report.match) {
        for (const auto& m : report.mismatches) out << "mismatch: " << m << '\n';
        return exit_mismatch;
    }
    out << "network matches: " << report.observed_events << " fusion events\n";
    return exit_ok;
}

} // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal fusion network experiments", "mfn"};
    app.require_subcommand(1);
    Flags f;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "Experiment configuration (JSON)")->required();
        sub->add_option("--out", f.out, "Output directory");
        sub->add_option("--seed", f.seed, "Override the configuration seed");
        sub->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
    };

    struct Entry {
        CLI::App* app;
        int (*fn)(const Flags&, std::ostream&, Progress&);
    };
    std::vector<Entry> entries;

    auto* synth = app.add_subcommand("synth", "Generate the synthetic XOR dataset as MVOL files and a manifest");
    add_common(synth);
    entries.push_back({synth, cmd_synth});

    auto* pre = app.add_subcommand("preprocess", "Run the preprocessing pipeline over a manifest");
    add_common(pre);
    entries.push_back({pre, cmd_preprocess});

    auto* train = app.add_subcommand("train", "Train one model on one fold");
    add_common(train);
    train->add_option("--strategy", f.strategy, "Fusion strategy");
    train->add_option("--fold", f.fold, "Fold index");
    entries.push_back({train, cmd_train});

    auto* cv = app.add_subcommand("cv", "Cross-validate one model");
    add_common(cv);
    cv->add_option("--strategy", f.strategy, "Fusion strategy");
    entries.push_back({cv, cmd_cv});

    auto* grid = app.add_subcommand("gridsearch", "Rank (stages, blocks) configurations on validation splits");
    add_common(grid);
    entries.push_back({grid, cmd_gridsearch});

    auto* compare = app.add_subcommand("compare", "Wilcoxon signed-rank comparison of two cv runs");
    compare->add_option("--a", f.run_a, "First cv output directory")->required();
    compare->add_option("--b", f.run_b, "Second cv output directory")->required();
    compare->add_option("--out", f.out, "Output directory");
    entries.push_back({compare, cmd_compare});

    auto* verify = app.add_subcommand("verify-graph", "Check the fusion graph against an instrumented network");
    add_common(verify);
    entries.push_back({verify, cmd_verify_graph});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    Progress progress(err);
    try {
        for (const auto& e : entries) {
            if (e.app->parsed()) return e.fn(f, out, progress);
        }
        return exit_config;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
}

} // namespace mfn::cli
