// SPDX-License-Identifier: Apache-2.0
#include "mfn/cli/config.hpp"

#include <fstream>
#include <set>

#include "mfn/common/errors.hpp"
#include "mfn/common/rng.hpp"

namespace mfn::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + section);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::array<int, 3> shape3(const json& j, const char* what) {
    const auto v = j.get<std::vector<int>>();
    if (v.size() != 3) throw ConfigError(std::string(what) + " needs three values");
    return {v[0], v[1], v[2]};
}

std::array<float, 3> floats3(const json& j, const char* what) {
    const auto v = j.get<std::vector<float>>();
    if (v.size() != 3) throw ConfigError(std::string(what) + " needs three values");
    return {v[0], v[1], v[2]};
}

void check_range(const std::vector<int>& values, const char* what) {
    if (values.empty()) throw ConfigError(std::string(what) + " must not be empty");
    for (int v : values) {
        if (v < 1 || v > 5) throw ConfigError(std::string(what) + " values must lie in [1, 5]");
    }
}

} // namespace

std::array<int, 3> ExperimentConfig::input_shape() const {
    return synth ? synth->shape : preprocess.out_shape;
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir, const Overrides& overrides) {
    try {
        reject_unknown(j, "config", {"seed", "dataset", "preprocess", "model", "folds", "training", "grid", "output_dir"});
        ExperimentConfig c;
        if (!j.contains("seed") && !overrides.seed) throw ConfigError("config must set a top-level \"seed\"");
        c.seed = overrides.seed ? *overrides.seed : j.at("seed").get<std::uint64_t>();

        if (!j.contains("dataset")) throw ConfigError("config must describe a \"dataset\"");
        const auto& ds = j.at("dataset");
        reject_unknown(ds, "dataset", {"manifest", "synth"});
        if (ds.contains("manifest") == ds.contains("synth")) {
            throw ConfigError("dataset needs exactly one of \"manifest\" or \"synth\"");
        }
        if (ds.contains("manifest")) {
            std::filesystem::path p = ds.at("manifest").get<std::string>();
            c.manifest = p.is_absolute() ? p : base_dir / p;
        } else {
            const auto& s = ds.at("synth");
            reject_unknown(s, "dataset.synth",
                           {"n_studies", "shape", "blob_radius", "amplitude", "noise_sigma", "texture_sigma",
                            "background", "balance", "seed"});
            data::SynthParams p;
            p.n_studies = get_or(s, "n_studies", p.n_studies);
            if (s.contains("shape")) p.shape = shape3(s.at("shape"), "dataset.synth.shape");
            p.blob_radius = get_or(s, "blob_radius", p.blob_radius);
            p.amplitude = get_or(s, "amplitude", p.amplitude);
            p.noise_sigma = get_or(s, "noise_sigma", p.noise_sigma);
            p.texture_sigma = get_or(s, "texture_sigma", p.texture_sigma);
            p.background = get_or(s, "background", p.background);
            p.balance = get_or(s, "balance", p.balance);
            p.seed = get_or(s, "seed", derive_seed(c.seed, "synth"));
            p.validate();
            c.synth = p;
        }

        if (j.contains("preprocess")) {
            const auto& p = j.at("preprocess");
            reject_unknown(p, "preprocess", {"target_spacing", "out_shape"});
            if (p.contains("target_spacing")) c.preprocess.target_spacing = floats3(p.at("target_spacing"), "target_spacing");
            if (p.contains("out_shape")) c.preprocess.out_shape = shape3(p.at("out_shape"), "out_shape");
        }
        for (float s : c.preprocess.target_spacing) {
            if (!(s > 0.0f)) throw ConfigError("target_spacing must be positive");
        }

        const json model = j.value("model", json::object());
        reject_unknown(model, "model",
                       {"stages", "blocks_per_stage", "base_channels", "strategy", "seed", "bn_momentum", "bn_eps"});
        c.model.stages = get_or(model, "stages", c.model.stages);
        c.model.blocks_per_stage = get_or(model, "blocks_per_stage", c.model.blocks_per_stage);
        c.model.base_channels = get_or(model, "base_channels", c.model.base_channels);
        if (model.contains("strategy")) c.model.strategy = nets::parse_strategy(model.at("strategy").get<std::string>());
        if (overrides.strategy) c.model.strategy = *overrides.strategy;
        c.model.seed = get_or(model, "seed", derive_seed(c.seed, "model"));
        c.model.bn_momentum = get_or(model, "bn_momentum", c.model.bn_momentum);
        c.model.bn_eps = get_or(model, "bn_eps", c.model.bn_eps);
        c.model.input_shape = c.input_shape();
        c.model.validate();

        const json folds = j.value("folds", json::object());
        reject_unknown(folds, "folds", {"k", "seed"});
        c.k = get_or(folds, "k", c.k);
        if (c.k < 2) throw ConfigError("folds.k must be at least 2");
        c.fold_seed = get_or(folds, "seed", derive_seed(c.seed, "folds"));

        const json t = j.value("training", json::object());
        reject_unknown(t, "training",
                       {"epochs", "lr", "decay_every", "decay_factor", "batch_size", "eval_batch_size", "seed"});
        c.training.epochs = get_or(t, "epochs", c.training.epochs);
        c.training.lr = get_or(t, "lr", c.training.lr);
        c.training.decay_every = get_or(t, "decay_every", c.training.decay_every);
        c.training.decay_factor = get_or(t, "decay_factor", c.training.decay_factor);
        c.training.batch_size = get_or(t, "batch_size", c.training.batch_size);
        c.training.eval_batch_size = get_or(t, "eval_batch_size", c.training.eval_batch_size);
        c.training.seed = get_or(t, "seed", derive_seed(c.seed, "training"));
        c.training.validate();

        const json g = j.value("grid", json::object());
        reject_unknown(g, "grid", {"stages", "blocks_per_stage"});
        c.grid_stages = get_or(g, "stages", c.grid_stages);
        c.grid_blocks = get_or(g, "blocks_per_stage", c.grid_blocks);
        check_range(c.grid_stages, "grid.stages");
        check_range(c.grid_blocks, "grid.blocks_per_stage");

        if (j.contains("output_dir")) {
            std::filesystem::path p = j.at("output_dir").get<std::string>();
            c.output_dir = p.is_absolute() ? p : base_dir / p;
        }
        if (overrides.output_dir) c.output_dir = *overrides.output_dir;
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto c = parse_config(j, path.parent_path(), overrides);
    if (c.manifest && !std::filesystem::exists(*c.manifest)) {
        throw ConfigError("manifest " + c.manifest->string() + " does not exist");
    }
    return c;
}

json to_json(const ExperimentConfig& c) {
    json dataset;
    if (c.manifest) {
        dataset["manifest"] = std::filesystem::absolute(*c.manifest).lexically_normal().generic_string();
    } else {
        const auto& p = *c.synth;
        dataset["synth"] = {{"n_studies", p.n_studies},     {"shape", p.shape},
                            {"blob_radius", p.blob_radius}, {"amplitude", p.amplitude},
                            {"noise_sigma", p.noise_sigma}, {"texture_sigma", p.texture_sigma},
                            {"background", p.background},   {"balance", p.balance},
                            {"seed", p.seed}};
    }
    json j{{"seed", c.seed},
           {"dataset", std::move(dataset)},
           {"preprocess", {{"target_spacing", c.preprocess.target_spacing}, {"out_shape", c.preprocess.out_shape}}},
           {"model",
            {{"stages", c.model.stages},
             {"blocks_per_stage", c.model.blocks_per_stage},
             {"base_channels", c.model.base_channels},
             {"strategy", std::string(nets::to_string(c.model.strategy))},
             {"seed", c.model.seed},
             {"bn_momentum", c.model.bn_momentum},
             {"bn_eps", c.model.bn_eps}}},
           {"folds", {{"k", c.k}, {"seed", c.fold_seed}}},
           {"training",
            {{"epochs", c.training.epochs},
             {"lr", c.training.lr},
             {"decay_every", c.training.decay_every},
             {"decay_factor", c.training.decay_factor},
             {"batch_size", c.training.batch_size},
             {"eval_batch_size", c.training.eval_batch_size},
             {"seed", c.training.seed}}},
           {"grid", {{"stages", c.grid_stages}, {"blocks_per_stage", c.grid_blocks}}}};
    return j;
}

} // namespace mfn::cli
