// SPDX-License-Identifier: Apache-2.0
#include "mfn/nets/network.hpp"

#include <algorithm>
#include <cmath>

#include "mfn/common/errors.hpp"
#include "mfn/common/rng.hpp"

namespace mfn::nets {

using namespace mfn::tensor;

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_modality(const std::optional<Tensor>& t, const char* name, int stages) {
    if (!t) throw ConfigError(std::string("strategy requires the ") + name + " modality");
    if (t->rank() != 5 || t->dim(1) != 1) {
        throw ConfigError(std::string(name) + " input must be (B, 1, D, H, W), got " + tensor::to_string(t->shape()));
    }
    const std::int64_t factor = std::int64_t{1} << stages;
    for (std::size_t a = 2; a < 5; ++a) {
        if (t->dim(a) < factor || t->dim(a) % factor != 0) {
            throw ConfigError(std::string(name) + " spatial extents must be multiples of 2^stages, got " +
                              tensor::to_string(t->shape()));
        }
    }
}

template <typename P, typename B, typename N>
struct StateVisitor {
    P on_param;
    B on_buffer;
    N on_batchnorm;
};

template <typename V>
void visit_conv(V& v, const std::string& prefix, Conv& conv) {
    v.on_param(prefix + ".weight", conv.kernel);
    if (conv.bias) v.on_param(prefix + ".bias", *conv.bias);
}

template <typename V>
void visit_bn(V& v, const std::string& prefix, BatchNorm& bn) {
    v.on_param(prefix + ".gamma", bn.gamma);
    v.on_param(prefix + ".beta", bn.beta);
    v.on_buffer(prefix + ".running_mean", bn.running_mean);
    v.on_buffer(prefix + ".running_var", bn.running_var);
    v.on_batchnorm(bn);
}

template <typename V>
void visit_linear(V& v, const std::string& prefix, Linear& layer) {
    v.on_param(prefix + ".weight", layer.weight);
    v.on_param(prefix + ".bias", layer.bias);
}

std::vector<float> he_normal(std::uint64_t seed, std::int64_t count, std::int64_t fan_in) {
    Rng rng(seed);
    const double stddev = std::sqrt(2.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
    std::vector<float> v(static_cast<std::size_t>(count));
    for (auto& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
    return v;
}

} // namespace

Network::Network(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    auto make_branch = [&](std::string name) {
        Branch b{std::move(name), {}};
        for (int s = 0; s < cfg_.stages; ++s) {
            std::vector<BasicBlock> blocks;
            for (int k = 0; k < cfg_.blocks_per_stage; ++k) {
                blocks.push_back(make_basic_block(block_spec(cfg_, s, k), cfg_.bn_momentum, cfg_.bn_eps));
            }
            b.stages.push_back(std::move(blocks));
        }
        return b;
    };
    const int features = cfg_.stage_channels(cfg_.stages - 1);
    switch (cfg_.strategy) {
        case Strategy::multistage:
            branches_.push_back(make_branch("ct"));
            branches_.push_back(make_branch("pet"));
            for (int s = 0; s < cfg_.stages; ++s) {
                fusions_.push_back(make_fusion_block(cfg_.stage_channels(s), cfg_.bn_momentum, cfg_.bn_eps));
            }
            heads_.emplace_back("head", make_linear(2 * features, 2));
            break;
        case Strategy::unimodal_ct:
            branches_.push_back(make_branch("ct"));
            heads_.emplace_back("head_ct", make_linear(features, 2));
            break;
        case Strategy::unimodal_pet:
            branches_.push_back(make_branch("pet"));
            heads_.emplace_back("head_pet", make_linear(features, 2));
            break;
        case Strategy::early:
            branches_.push_back(make_branch("early"));
            heads_.emplace_back("head", make_linear(features, 2));
            break;
        case Strategy::late:
            branches_.push_back(make_branch("ct"));
            branches_.push_back(make_branch("pet"));
            heads_.emplace_back("head_ct", make_linear(features, 2));
            heads_.emplace_back("head_pet", make_linear(features, 2));
            break;
        case Strategy::single_fusion:
            branches_.push_back(make_branch("ct"));
            branches_.push_back(make_branch("pet"));
            gated_ = GatedUnit{make_linear(features, features), make_linear(features, features),
                               make_linear(2 * features, features)};
            heads_.emplace_back("head", make_linear(features, 2));
            break;
    }
    initialize();
}

template <typename Visitor>
void Network::visit(Visitor&& v) {
    for (auto& branch : branches_) {
        for (std::size_t s = 0; s < branch.stages.size(); ++s) {
            for (std::size_t k = 0; k < branch.stages[s].size(); ++k) {
                auto& b = branch.stages[s][k];
                const std::string p = branch.name + ".s" + std::to_string(s) + ".b" + std::to_string(k);
                visit_conv(v, p + ".conv1", b.conv1);
                visit_bn(v, p + ".bn1", b.bn1);
                visit_conv(v, p + ".conv2", b.conv2);
                visit_bn(v, p + ".bn2", b.bn2);
                visit_conv(v, p + ".projection", b.projection);
                visit_bn(v, p + ".bn_projection", b.bn_projection);
            }
        }
    }
    for (std::size_t s = 0; s < fusions_.size(); ++s) {
        const std::string p = "fusion.s" + std::to_string(s);
        visit_conv(v, p + ".squeeze_ct", fusions_[s].squeeze_ct);
        visit_bn(v, p + ".bn_ct", fusions_[s].bn_ct);
        visit_conv(v, p + ".squeeze_pet", fusions_[s].squeeze_pet);
        visit_bn(v, p + ".bn_pet", fusions_[s].bn_pet);
    }
    if (gated_) {
        visit_linear(v, "gmu.ct", gated_->ct);
        visit_linear(v, "gmu.pet", gated_->pet);
        visit_linear(v, "gmu.gate", gated_->gate);
    }
    for (auto& [name, head] : heads_) visit_linear(v, name, head);
}

void Network::initialize() {
    // Each weight draws from a stream keyed by its name, so a parameter's initial
    // value does not depend on which other layers the strategy builds.
    StateVisitor v{[&](const std::string& name, Tensor& t) {
                       if (!ends_with(name, ".weight")) return;
                       const std::int64_t fan_in = t.numel() / t.dim(0);
                       auto init = he_normal(derive_seed(cfg_.seed, name), t.numel(), fan_in);
                       std::copy(init.begin(), init.end(), t.values().begin());
                   },
                   [](const std::string&, std::vector<float>&) {}, [](BatchNorm&) {}};
    visit(v);
}

std::vector<NamedTensor> Network::parameters() {
    std::vector<NamedTensor> out;
    StateVisitor v{[&](const std::string& name, Tensor& t) { out.push_back({name, t}); },
                   [](const std::string&, std::vector<float>&) {}, [](BatchNorm&) {}};
    visit(v);
    return out;
}

std::vector<Tensor> Network::parameter_tensors() {
    std::vector<Tensor> out;
    for (auto& p : parameters()) out.push_back(p.tensor);
    return out;
}

std::vector<NamedBuffer> Network::buffers() {
    std::vector<NamedBuffer> out;
    StateVisitor v{[](const std::string&, Tensor&) {},
                   [&](const std::string& name, std::vector<float>& b) { out.push_back({name, &b}); },
                   [](BatchNorm&) {}};
    visit(v);
    return out;
}

std::int64_t Network::parameter_count() {
    std::int64_t n = 0;
    for (auto& p : parameters()) n += p.tensor.numel();
    return n;
}

std::vector<float> Network::flat_state() {
    std::vector<float> out;
    for (auto& p : parameters()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
    for (auto& b : buffers()) out.insert(out.end(), b.values->begin(), b.values->end());
    return out;
}

void Network::load_flat_state(std::span<const float> state) {
    std::size_t expected = 0;
    for (auto& p : parameters()) expected += static_cast<std::size_t>(p.tensor.numel());
    for (auto& b : buffers()) expected += b.values->size();
    if (state.size() != expected) {
        throw ConfigError("state holds " + std::to_string(state.size()) + " values, network expects " +
                          std::to_string(expected));
    }
    std::size_t at = 0;
    for (auto& p : parameters()) {
        auto v = p.tensor.values();
        std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(at), v.size(), v.begin());
        at += v.size();
    }
    for (auto& b : buffers()) {
        std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(at), b.values->size(), b.values->begin());
        at += b.values->size();
    }
}

void Network::set_mode(Mode mode) {
    mode_ = mode;
    StateVisitor v{[](const std::string&, Tensor&) {}, [](const std::string&, std::vector<float>&) {},
                   [mode](BatchNorm& bn) { bn.mode = mode; }};
    visit(v);
}

bool Network::needs_ct() const {
    return cfg_.strategy != Strategy::unimodal_pet;
}

bool Network::needs_pet() const {
    return cfg_.strategy != Strategy::unimodal_ct;
}

Tensor Network::run_branch(Branch& branch, const Tensor& x, ForwardProbe* probe) {
    Tensor h = x;
    for (auto& stage : branch.stages) {
        for (auto& block : stage) h = basic_block_forward(h, block);
        if (probe) probe->stage_outputs.push_back(h.shape());
    }
    return h;
}

std::vector<Tensor> Network::head_logits(const ModalityBatch& batch, ForwardProbe* probe) {
    if (needs_ct()) check_modality(batch.ct, "CT", cfg_.stages);
    if (needs_pet()) check_modality(batch.pet, "PET", cfg_.stages);
    if (needs_ct() && needs_pet() && batch.ct->shape() != batch.pet->shape()) {
        throw ConfigError("CT and PET inputs differ in shape: " + tensor::to_string(batch.ct->shape()) + " vs " +
                          tensor::to_string(batch.pet->shape()));
    }
    auto head = [this](std::size_t i, const Tensor& features) { return linear_forward(features, heads_[i].second); };
    auto note_latent = [probe](const Tensor& t) {
        if (probe) probe->latent = t.shape();
    };

    switch (cfg_.strategy) {
        case Strategy::multistage: {
            Tensor ct = *batch.ct;
            Tensor pet = *batch.pet;
            FusionRecorder* recorder = probe ? probe->fusion_recorder : nullptr;
            PathTrace ct_trace{-1, 0};
            PathTrace pet_trace{0, 0};
            for (int s = 0; s < cfg_.stages; ++s) {
                for (auto& block : branches_[0].stages[static_cast<std::size_t>(s)]) {
                    ct = basic_block_forward(ct, block, &ct_trace);
                }
                for (auto& block : branches_[1].stages[static_cast<std::size_t>(s)]) {
                    pet = basic_block_forward(pet, block, &pet_trace);
                }
                if (probe) {
                    probe->stage_outputs.push_back(ct.shape());
                    probe->stage_outputs.push_back(pet.shape());
                }
                if (probe && probe->bypass_fusion) continue;
                std::tie(ct, pet) = fusion_block_forward(ct, pet, fusions_[static_cast<std::size_t>(s)], recorder,
                                                         &ct_trace, &pet_trace);
            }
            if (recorder) recorder->record(FusionOp::concat, {ct_trace, pet_trace});
            auto latent = concat_channels(ct, pet);
            note_latent(latent);
            return {head(0, global_avg_pool(latent))};
        }
        case Strategy::unimodal_ct:
        case Strategy::unimodal_pet: {
            const Tensor& x = cfg_.strategy == Strategy::unimodal_ct ? *batch.ct : *batch.pet;
            auto features = run_branch(branches_[0], x, probe);
            note_latent(features);
            return {head(0, global_avg_pool(features))};
        }
        case Strategy::early: {
            auto features = run_branch(branches_[0], mul(*batch.ct, *batch.pet), probe);
            note_latent(features);
            return {head(0, global_avg_pool(features))};
        }
        case Strategy::late: {
            auto ct = run_branch(branches_[0], *batch.ct, probe);
            auto pet = run_branch(branches_[1], *batch.pet, probe);
            return {head(0, global_avg_pool(ct)), head(1, global_avg_pool(pet))};
        }
        case Strategy::single_fusion: {
            auto v_ct = global_avg_pool(run_branch(branches_[0], *batch.ct, probe));
            auto v_pet = global_avg_pool(run_branch(branches_[1], *batch.pet, probe));
            auto fused = gated_unit_forward(v_ct, v_pet, *gated_);
            if (probe) probe->latent = fused.shape();
            return {head(0, fused)};
        }
    }
    throw ConfigError("unhandled strategy");
}

Tensor Network::forward(const ModalityBatch& batch, ForwardProbe* probe) {
    auto logits = head_logits(batch, probe);
    if (logits.size() == 1) return logits.front();

    // Late fusion: average class probabilities, return them as log-probabilities.
    const auto p_ct = softmax_rows(logits[0]);
    const auto p_pet = softmax_rows(logits[1]);
    std::vector<float> out(p_ct.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double p = std::clamp(0.5 * (static_cast<double>(p_ct[i]) + p_pet[i]), 1e-12, 1.0);
        out[i] = static_cast<float>(std::log(p));
    }
    return Tensor::from_values(logits[0].shape(), std::move(out));
}

Tensor Network::training_loss(const ModalityBatch& batch, std::span<const int> labels,
                              std::span<const float> class_weights) {
    auto logits = head_logits(batch);
    Tensor loss = weighted_cross_entropy<float>(logits[0], labels, class_weights);
    for (std::size_t i = 1; i < logits.size(); ++i) {
        loss = add(loss, weighted_cross_entropy<float>(logits[i], labels, class_weights));
    }
    return loss;
}

std::vector<float> Network::predict_proba(const ModalityBatch& batch) {
    NoGradGuard no_grad;
    auto logits = head_logits(batch);
    std::vector<float> p1(static_cast<std::size_t>(logits[0].dim(0)), 0.0f);
    for (const auto& l : logits) {
        const auto probs = softmax_rows(l);
        for (std::size_t b = 0; b < p1.size(); ++b) p1[b] += probs[2 * b + 1];
    }
    if (logits.size() > 1) {
        for (auto& p : p1) p /= static_cast<float>(logits.size());
    }
    return p1;
}

Network build_network(const ModelConfig& cfg) { return Network(cfg); }

Tensor forward_classify(Network& net, const ModalityBatch& batch) { return net.forward(batch); }

std::int64_t parameter_count(Network& net) { return net.parameter_count(); }

} // namespace mfn::nets
