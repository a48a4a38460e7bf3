// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. An optional argument selects criteria whose
// name contains it. The lines are also written to acceptance_results.txt in
// the working directory.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "mfn/cli/commands.hpp"
#include "mfn/common/errors.hpp"
#include "mfn/common/rng.hpp"
#include "mfn/data/folds.hpp"
#include "mfn/data/synth.hpp"
#include "mfn/eval/report.hpp"
#include "mfn/fusiongraph/fusion_graph.hpp"
#include "mfn/preprocess/preprocess.hpp"

namespace fs = std::filesystem;
using namespace mfn;

namespace {

// Tolerances and sizes.
constexpr double grad_tolerance = 1e-4;
constexpr int grad_instances = 20;
constexpr int auc_instances = 1000;
constexpr double affine_tolerance = 1e-4; // relative, float32 volumes
constexpr double bayes_margin = 0.10;
constexpr double gmean_threshold = 0.75;
constexpr double unimodal_ceiling = 0.65;
constexpr double min_p_three_folds = 0.25; // 2 / 2^3
constexpr int reduction_inputs = 100;

// Fusion-advantage experiment.
constexpr std::uint64_t experiment_seed = 2024;
constexpr int experiment_epochs = 16;
constexpr int experiment_decay_every = 12;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// --- gradients ---------------------------------------------------------------

Outcome gradients() {
    const auto results = testsupport::run_gradient_suite(20240601, grad_instances);
    double worst = 0.0;
    std::string worst_op;
    for (const auto& r : results) {
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_op = r.op;
        }
    }
    return {worst < grad_tolerance, std::to_string(results.size()) + " ops x " + std::to_string(grad_instances) +
                                        " instances, max rel error " + fmt("%.2e", worst) + " (" + worst_op + ")"};
}

// --- architecture --------------------------------------------------------------

Outcome architecture() {
    nets::ModelConfig cfg; // L=3, N=3, base 16, 32x64x64
    nets::Network net(cfg);
    net.set_mode(nets::Mode::inference);
    Rng rng(3);
    std::vector<float> v(32 * 64 * 64);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    const auto t = nets::Tensor::from_values({1, 1, 32, 64, 64}, v);
    nets::ForwardProbe probe;
    tensor::NoGradGuard no_grad;
    const auto logits = net.forward({t, t}, &probe);

    bool ok = logits.shape() == tensor::Shape{1, 2} && probe.stage_outputs.size() == 6;
    const int channels[3] = {16, 32, 64};
    for (int s = 0; ok && s < 3; ++s) {
        const tensor::Shape expected{1, channels[s], 32 >> (s + 1), 64 >> (s + 1), 64 >> (s + 1)};
        ok = probe.stage_outputs[2 * s] == expected && probe.stage_outputs[2 * s + 1] == expected;
    }
    ok = ok && probe.latent.size() == 5 && probe.latent[1] == 128;
    return {ok, "stage channels 16/32/64, spatial halving, latent " + tensor::to_string(probe.latent)};
}

// --- fusion graph --------------------------------------------------------------

Outcome fusion_graph() {
    using fusiongraph::FusionEvent;
    using nets::FusionOp;
    const auto g = fusiongraph::enumerate_fusions(3, 3);
    const std::vector<FusionEvent> expected{
        {1, FusionOp::multiply, {{-1, 7}, {0, 7}}}, {2, FusionOp::add, {{-1, 6}, {1, 0}}},
        {3, FusionOp::add, {{0, 6}, {1, 0}}},       {4, FusionOp::multiply, {{2, 7}, {3, 7}}},
        {5, FusionOp::add, {{2, 6}, {4, 0}}},       {6, FusionOp::add, {{3, 6}, {4, 0}}},
        {7, FusionOp::multiply, {{5, 7}, {6, 7}}},  {8, FusionOp::add, {{5, 6}, {7, 0}}},
        {9, FusionOp::add, {{6, 6}, {7, 0}}},       {10, FusionOp::concat, {{8, 0}, {9, 0}}},
    };
    nets::ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.input_shape = {8, 8, 8};
    nets::Network net(cfg);
    const auto report = fusiongraph::verify_against_network(g, net);
    const bool ok = g.events == expected && report.match;
    return {ok, std::to_string(g.events.size()) + " events, terminal F" + std::to_string(g.terminal()) +
                    ", network " + (report.match ? "matches" : "differs") + " (" +
                    std::to_string(report.observed_events) + " observed)"};
}

// --- fusion identity -----------------------------------------------------------

Outcome fusion_identity() {
    bool ok = true;
    Rng rng(4);
    int compared = 0;
    for (auto mode : {nets::Mode::training, nets::Mode::inference}) {
        nets::ModelConfig cfg;
        cfg.stages = 3;
        cfg.blocks_per_stage = 2;
        cfg.base_channels = 4;
        cfg.input_shape = {8, 16, 16};
        cfg.seed = 99;
        nets::Network net(cfg);
        net.set_mode(mode);
        for (auto& f : net.fusion_blocks()) {
            for (auto* c : {&f.squeeze_ct, &f.squeeze_pet}) std::fill(c->kernel.values().begin(), c->kernel.values().end(), 0.0f);
            for (auto* b : {&f.bn_ct, &f.bn_pet}) std::fill(b->beta.values().begin(), b->beta.values().end(), 0.0f);
        }
        std::vector<float> a(2 * 8 * 16 * 16), b(a.size());
        for (auto& x : a) x = static_cast<float>(rng.uniform());
        for (auto& x : b) x = static_cast<float>(rng.uniform());
        nets::ModalityBatch batch{nets::Tensor::from_values({2, 1, 8, 16, 16}, a),
                                  nets::Tensor::from_values({2, 1, 8, 16, 16}, b)};
        const auto fused = net.forward(batch);
        nets::ForwardProbe bypass;
        bypass.bypass_fusion = true;
        const auto plain = net.forward(batch, &bypass);
        ok = ok && fused.values().size() == plain.values().size() &&
             std::equal(fused.values().begin(), fused.values().end(), plain.values().begin());
        compared += static_cast<int>(fused.numel());
    }
    return {ok, std::to_string(compared) + " logits compared bitwise in training and inference mode"};
}

// --- metric oracles ------------------------------------------------------------

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
    long long twice = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != 1 || y[j] != 0) continue;
            ++pairs;
            twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
        }
    return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

// Two-sided exact p by enumerating all 2^n sign assignments of the midranks.
double enumerate_wilcoxon(const std::vector<double>& d) {
    std::vector<double> nz;
    for (double x : d)
        if (x != 0.0) nz.push_back(x);
    const int n = static_cast<int>(nz.size());
    std::vector<std::size_t> order(nz.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(nz[a]) < std::abs(nz[b]); });
    std::vector<double> rank(nz.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = (static_cast<double>(i + j) + 2.0) / 2.0;
        i = j + 1;
    }
    double total = 0.0, w_plus = 0.0;
    for (int i = 0; i < n; ++i) {
        total += rank[static_cast<std::size_t>(i)];
        if (nz[static_cast<std::size_t>(i)] > 0) w_plus += rank[static_cast<std::size_t>(i)];
    }
    const double observed = std::abs(w_plus - total / 2.0);
    long long extreme = 0;
    for (long long mask = 0; mask < (1LL << n); ++mask) {
        double w = 0.0;
        for (int i = 0; i < n; ++i)
            if (mask >> i & 1) w += rank[static_cast<std::size_t>(i)];
        if (std::abs(w - total / 2.0) >= observed - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(1LL << n);
}

Outcome metric_oracles() {
    Rng rng(5);
    int auc_mismatch = 0;
    for (int t = 0; t < auc_instances; ++t) {
        const int n = 2 + static_cast<int>(rng.below(49));
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)] = static_cast<double>(rng.below(8)) / 8.0;
            y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
        }
        y[0] = 0;
        y[1] = 1;
        if (eval::auc(s, y) != brute_auc(s, y)) ++auc_mismatch;
    }
    int wilcoxon_mismatch = 0, wilcoxon_cases = 0;
    for (int n = 1; n <= 10; ++n) {
        for (int t = 0; t < 20; ++t) {
            std::vector<double> d(static_cast<std::size_t>(n));
            for (auto& x : d) x = static_cast<double>(static_cast<int>(rng.below(9)) - 4) / 4.0;
            if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) d[0] = 0.5;
            ++wilcoxon_cases;
            if (std::abs(eval::wilcoxon_signed_rank(d, std::vector<double>(d.size(), 0.0)).p_value - enumerate_wilcoxon(d)) > 1e-12) ++wilcoxon_mismatch;
        }
    }
    const double p5 = eval::wilcoxon_signed_rank(std::vector<double>{0.81, 0.82, 0.83, 0.84, 0.85},
                                                  std::vector<double>{0.80, 0.80, 0.80, 0.80, 0.80})
                          .p_value;
    const bool ok = auc_mismatch == 0 && wilcoxon_mismatch == 0 && std::abs(p5 - 0.0625) < 1e-12;
    return {ok, std::to_string(auc_instances - auc_mismatch) + "/" + std::to_string(auc_instances) +
                    " AUC exact, " + std::to_string(wilcoxon_cases - wilcoxon_mismatch) + "/" +
                    std::to_string(wilcoxon_cases) + " Wilcoxon exact, n=5 unanimous p=" + fmt("%.4f", p5)};
}

// --- preprocessing -------------------------------------------------------------

Outcome preprocessing() {
    using namespace preprocess;
    auto v = Volume::filled({9, 11, 13}, 0.0f, Modality::ct);
    v.spacing = {0.7f, 1.3f, 2.9f};
    v.origin = {1.5f, -2.0f, 7.0f};
    auto field = [](const Volume& g, int z, int y, int x) {
        const double px = g.origin[0] + x * static_cast<double>(g.spacing[0]);
        const double py = g.origin[1] + y * static_cast<double>(g.spacing[1]);
        const double pz = g.origin[2] + z * static_cast<double>(g.spacing[2]);
        return 2.0 * px + 3.0 * py - pz;
    };
    for (int z = 0; z < 9; ++z)
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 13; ++x) v.at(z, y, x) = static_cast<float>(field(v, z, y, x));
    const auto r = resample(v, standard_spacing);
    double worst = 0.0;
    for (int z = 0; z < r.dims[0]; ++z)
        for (int y = 0; y < r.dims[1]; ++y)
            for (int x = 0; x < r.dims[2]; ++x) {
                const double e = field(r, z, y, x);
                worst = std::max(worst, std::abs(r.at(z, y, x) - e) / std::max(1.0, std::abs(e)));
            }

    auto ct = Volume::filled({1, 1, 3}, 0.0f, Modality::ct);
    ct.data = {-1024.0f, 0.0f, 1024.0f};
    auto pet = Volume::filled({1, 1, 2}, 0.0f, Modality::pet);
    pet.data = {0.0f, 20.0f};
    const bool ranges = clip_normalize(ct).data == std::vector<float>{0.0f, 0.5f, 1.0f} &&
                        clip_normalize(pet).data == std::vector<float>{0.0f, 1.0f};
    return {worst < affine_tolerance && ranges,
            "affine field max rel error " + fmt("%.2e", worst) + " over " + std::to_string(r.size()) +
                " voxels; CT -1024/0/1024 -> 0/0.5/1, PET 0/20 -> 0/1 " + (ranges ? "exact" : "WRONG")};
}

// --- fusion advantage ----------------------------------------------------------

// Bayes-optimal AUC of the generator. With u = (a1 + a2)/sqrt2 and
// v = (a1 - a2)/sqrt2 the likelihood ratio is cosh(c u) / cosh(c v), c = sqrt2
// delta / sigma^2. Under class 1, u is a two-component mixture at +-sqrt2 delta
// and v is centred; class 0 swaps them. The score difference of a random pair
// then has the law of g(U)+g(U') - g(V)-g(V') with g = log cosh(c .), so
// AUC = P(g|U|+g|U'| > g|V|+g|V'|), evaluated by nested quadrature.
double bayes_auc(double delta, double sigma) {
    const double m = std::sqrt(2.0) * delta;
    const double c = m / (sigma * sigma);
    auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    auto big_phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    auto g = [c](double t) {
        const double a = std::abs(c * t);
        return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
    };
    auto g_inv = [c](double w) { // w >= 0
        return (w + std::log1p(std::sqrt(-std::expm1(-2.0 * w)))) / c;
    };
    auto f_centred = [&](double t) { return 2.0 * phi(t / sigma) / sigma; };
    auto f_mixture = [&](double t) { return (phi((t - m) / sigma) + phi((t + m) / sigma)) / sigma; };

    const int n = 300;
    const double hi = m + 9.0 * sigma;
    const double h = hi / n;
    std::vector<double> x(n), wc(n), wm(n), gx(n);
    for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = (i + 0.5) * h; // midpoint rule
        wc[static_cast<std::size_t>(i)] = f_centred(x[static_cast<std::size_t>(i)]) * h;
        wm[static_cast<std::size_t>(i)] = f_mixture(x[static_cast<std::size_t>(i)]) * h;
        gx[static_cast<std::size_t>(i)] = g(x[static_cast<std::size_t>(i)]);
    }
    // P(g|V| + g|V'| <= z) = E_V[ 2 Phi(g_inv(z - g|V|) / sigma) - 1 ].
    auto cdf_centred_pair = [&](double z) {
        double p = 0.0;
        for (int i = 0; i < n; ++i) {
            const double rest = z - gx[static_cast<std::size_t>(i)];
            if (rest < 0.0) break; // g is increasing in |t|
            p += wc[static_cast<std::size_t>(i)] * (2.0 * big_phi(g_inv(rest) / sigma) - 1.0);
        }
        return p;
    };
    double auc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            auc += wm[static_cast<std::size_t>(i)] * wm[static_cast<std::size_t>(j)] *
                   cdf_centred_pair(gx[static_cast<std::size_t>(i)] + gx[static_cast<std::size_t>(j)]);
    return auc;
}

// Monte Carlo cross-check of the quadrature with the generator's own latents.
double latent_auc(const data::SynthDataset& ds) {
    std::vector<double> score;
    std::vector<int> y;
    const double s2 = ds.params.noise_sigma * ds.params.noise_sigma;
    for (std::size_t i = 0; i < ds.latents.size(); ++i) {
        const auto& l = ds.latents[i];
        const double c = ds.params.amplitude / s2;
        score.push_back(std::log(std::cosh(c * (l.amp_ct + l.amp_pet))) - std::log(std::cosh(c * (l.amp_ct - l.amp_pet))));
        y.push_back(ds.data.samples[i].label);
    }
    return eval::auc(score, y);
}

Outcome fusion_advantage() {
    data::SynthParams sp; // n = 600, 16x32x32, sigma = delta / 2
    sp.seed = experiment_seed;
    const double bayes = bayes_auc(sp.amplitude, sp.noise_sigma);
    const double threshold = bayes - bayes_margin;
    const auto synth = data::synth_generate(sp);
    std::fprintf(stderr, "  Bayes AUC (quadrature) %.4f, latent-score AUC on this sample %.4f, threshold %.4f\n", bayes,
                 latent_auc(synth), threshold);

    const auto plan = data::stratified_kfold(synth.data.labels(), 3, derive_seed(experiment_seed, "folds"));
    eval::TrainSchedule schedule;
    schedule.epochs = experiment_epochs;
    schedule.decay_every = experiment_decay_every;
    schedule.seed = derive_seed(experiment_seed, "training");

    std::vector<eval::CvResult> runs;
    for (auto s : {nets::Strategy::multistage, nets::Strategy::unimodal_ct, nets::Strategy::unimodal_pet,
                   nets::Strategy::late}) {
        nets::ModelConfig cfg;
        cfg.stages = 2;
        cfg.blocks_per_stage = 1;
        cfg.input_shape = sp.shape;
        cfg.strategy = s;
        cfg.seed = derive_seed(experiment_seed, "model");
        const auto t0 = std::chrono::steady_clock::now();
        runs.push_back(eval::cross_validate(cfg, synth.data, plan, schedule, 1));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "  %-12s AUC %.3f (%.3f) Gmean %.3f (%.3f)  [%.0fs]\n", runs.back().model.c_str(),
                     runs.back().summary.auc.mean, runs.back().summary.auc.std, runs.back().summary.gmean.mean,
                     runs.back().summary.gmean.std, secs);
    }
    std::vector<std::pair<std::string, eval::MetricSummary>> rows;
    for (const auto& r : runs) rows.emplace_back(r.model, r.summary);
    std::fprintf(stderr, "%s", eval::format_table(rows).c_str());

    const auto& ms = runs[0].summary;
    bool ok = ms.auc.mean >= threshold && ms.gmean.mean >= gmean_threshold;
    std::string detail = "multistage AUC " + fmt("%.3f", ms.auc.mean) + " (>= " + fmt("%.3f", threshold) +
                         ") Gmean " + fmt("%.3f", ms.gmean.mean) + "; baselines AUC";
    for (std::size_t i = 1; i < runs.size(); ++i) {
        const auto report = eval::compare_models(runs[0], runs[i]);
        ok = ok && runs[i].summary.auc.mean <= unimodal_ceiling &&
             std::abs(report.auc_test.p_value - min_p_three_folds) < 1e-12;
        detail += " " + runs[i].model + " " + fmt("%.3f", runs[i].summary.auc.mean) + " (p=" +
                  fmt("%.2f", report.auc_test.p_value) + ")";
    }
    return {ok, detail};
}

// --- early-fusion reduction ----------------------------------------------------

Outcome early_reduction() {
    nets::ModelConfig cfg;
    cfg.stages = 2;
    cfg.blocks_per_stage = 1;
    cfg.base_channels = 4;
    cfg.input_shape = {8, 8, 8};
    cfg.seed = 21;
    cfg.strategy = nets::Strategy::early;
    nets::Network early(cfg);
    cfg.strategy = nets::Strategy::unimodal_ct;
    nets::Network uni(cfg);
    uni.load_flat_state(early.flat_state());
    early.set_mode(nets::Mode::inference);
    uni.set_mode(nets::Mode::inference);
    tensor::NoGradGuard no_grad;
    Rng rng(22);
    int equal = 0;
    for (int t = 0; t < reduction_inputs; ++t) {
        std::vector<float> a(512), b(512);
        for (auto& x : a) x = static_cast<float>(rng.uniform());
        for (auto& x : b) x = static_cast<float>(rng.uniform());
        const auto ct = nets::Tensor::from_values({1, 1, 8, 8, 8}, a);
        const auto pet = nets::Tensor::from_values({1, 1, 8, 8, 8}, b);
        const auto x = early.forward({ct, pet});
        const auto y = uni.forward({tensor::mul(ct, pet), std::nullopt});
        if (std::equal(x.values().begin(), x.values().end(), y.values().begin())) ++equal;
    }
    return {equal == reduction_inputs, std::to_string(equal) + "/" + std::to_string(reduction_inputs) +
                                           " inputs bitwise equal to the unimodal network on the product"};
}

// --- determinism ----------------------------------------------------------------

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "mfn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_command(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::fprintf(stderr, "  mfn exited %d: %s", code, err.str().c_str());
    return code;
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "mfn_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    eval::write_text(dir / "config.json", R"({
  "seed": 31,
  "dataset": {"synth": {"n_studies": 90, "shape": [8, 16, 16], "blob_radius": 2}},
  "model": {"stages": 2, "blocks_per_stage": 1, "base_channels": 4},
  "folds": {"k": 3},
  "training": {"epochs": 4, "decay_every": 3, "batch_size": 8}
})");
    if (cli({"cv", "--config", (dir / "config.json").string(), "--out", (dir / "a").string()}) != 0)
        return {false, "first cv run failed"};
    const auto frozen = (dir / "a" / "config.resolved.json").string();
    if (cli({"cv", "--config", frozen, "--out", (dir / "b").string(), "--workers", "3"}) != 0)
        return {false, "second cv run failed"};
    int identical = 0, files = 0;
    for (const char* f : {"config.resolved.json", "metrics.json", "metrics.csv", "table.txt", "fold_0.fnet",
                          "fold_1.fnet", "fold_2.fnet"}) {
        ++files;
        if (eval::read_text(dir / "a" / f) == eval::read_text(dir / "b" / f)) ++identical;
    }
    return {identical == files, std::to_string(identical) + "/" + std::to_string(files) +
                                    " files byte-identical (second run from the frozen config, 3 workers)"};
}

// --- grid search ----------------------------------------------------------------

Outcome grid_protocol() {
    data::SynthParams sp;
    sp.n_studies = 240;
    sp.seed = experiment_seed + 1;
    const auto synth = data::synth_generate(sp);
    const auto plan = data::stratified_kfold(synth.data.labels(), 3, 41);
    nets::ModelConfig base;
    base.base_channels = 8;
    base.input_shape = sp.shape;
    base.seed = 42;
    eval::TrainSchedule schedule;
    schedule.epochs = 8;
    schedule.decay_every = 6;
    schedule.seed = 43;
    const std::vector<int> range{1, 2};

    std::vector<data::AccessLog> logs(3);
    const auto first = eval::grid_search(synth.data, plan, base, range, range, schedule, 1, logs);
    const auto second = eval::grid_search(synth.data, plan, base, range, range, schedule, 1);

    bool audit = true;
    for (std::size_t f = 0; f < 3; ++f) {
        const auto touched = logs[f].touched();
        const auto& fold = plan.folds[f];
        std::set<std::size_t> allowed(fold.train.begin(), fold.train.end());
        allowed.insert(fold.validation.begin(), fold.validation.end());
        audit = audit && !touched.empty() &&
                std::includes(allowed.begin(), allowed.end(), touched.begin(), touched.end());
        for (auto t : fold.test) audit = audit && !touched.count(t);
    }
    const bool reproducible = eval::to_json(first) == eval::to_json(second);
    std::string ranking;
    for (const auto& e : first.ranked) {
        ranking += (ranking.empty() ? "" : " > ") + std::string("L") + std::to_string(e.stages) + "N" +
                   std::to_string(e.blocks_per_stage) + " " + fmt("%.3f", e.validation_auc.mean);
    }
    const bool one_stage_first = first.ranked.front().stages == 1;
    std::string detail = std::string("test splits never read: ") + (audit ? "yes" : "NO") +
                         ", reproducible: " + (reproducible ? "yes" : "NO") + ", ranking " + ranking;
    if (one_stage_first) detail += "; deviation: an L=1 configuration ranks first at this scale";
    return {audit && reproducible, detail};
}

} // namespace

int main(int argc, char** argv) {
    const std::string filter = argc > 1 ? argv[1] : "";
    const std::vector<Criterion> criteria{
        {"gradient-correctness", gradients},      {"architecture-shapes", architecture},
        {"fusion-graph-equivalence", fusion_graph}, {"fusion-identity", fusion_identity},
        {"metric-oracles", metric_oracles},       {"preprocessing-exactness", preprocessing},
        {"fusion-advantage", fusion_advantage},   {"early-fusion-reduction", early_reduction},
        {"determinism", determinism},             {"grid-search-protocol", grid_protocol},
    };
    int failures = 0;
    std::FILE* log = std::fopen("acceptance_results.txt", "w");
    for (const auto& c : criteria) {
        if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (std::FILE* f : {stdout, log}) {
            if (!f) continue;
            std::fprintf(f, "%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs);
            std::fflush(f);
        }
        if (!o.pass) ++failures;
    }
    if (log) std::fclose(log);
    return failures == 0 ? 0 : 1;
}
