// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfn/nets/layers.hpp"
#include "mfn/nets/model_config.hpp"

namespace mfn::nets {

using tensor::Mode;
using tensor::Shape;

/// Network inputs, each (B, 1, D, H, W). Which modalities are required depends
/// on the strategy.
struct ModalityBatch {
    std::optional<Tensor> ct;
    std::optional<Tensor> pet;
};

/// Optional instrumentation of a forward pass.
struct ForwardProbe {
    bool bypass_fusion = false;            // fusion blocks become pass-throughs
    FusionRecorder* fusion_recorder = nullptr;
    std::vector<Shape> stage_outputs;      // per-branch stage outputs, branch-major
    Shape latent;                          // feature map entering the classification head
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct NamedBuffer {
    std::string name;
    std::vector<float>* values;
};

/// One feature-extraction branch: stages x blocks.
struct Branch {
    std::string name;
    std::vector<std::vector<BasicBlock>> stages;
};

class Network {
public:
    explicit Network(ModelConfig cfg);

    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    const ModelConfig& config() const { return cfg_; }

    /// (B, 2) logits. For late fusion the two heads' class probabilities are
    /// averaged and returned as log-probabilities.
    Tensor forward(const ModalityBatch& batch, ForwardProbe* probe = nullptr);

    /// Per-head logits; a single entry except for late fusion (CT head, PET head).
    std::vector<Tensor> head_logits(const ModalityBatch& batch, ForwardProbe* probe = nullptr);

    /// Class-weighted cross-entropy summed over the heads. Late fusion heads
    /// share no parameters, so this trains them independently.
    Tensor training_loss(const ModalityBatch& batch, std::span<const int> labels,
                         std::span<const float> class_weights);

    /// Probability of class 1 per batch element, computed without graph recording.
    std::vector<float> predict_proba(const ModalityBatch& batch);

    void set_mode(Mode mode);
    Mode mode() const { return mode_; }

    /// Trainable parameters in topology order.
    std::vector<NamedTensor> parameters();
    std::vector<Tensor> parameter_tensors();
    /// Non-trainable state (batch-norm running statistics) in topology order.
    std::vector<NamedBuffer> buffers();

    std::int64_t parameter_count();

    /// Parameters then buffers, flattened in registry order.
    std::vector<float> flat_state();
    void load_flat_state(std::span<const float> state);

    std::vector<Branch>& branches() { return branches_; }
    std::vector<FusionBlock>& fusion_blocks() { return fusions_; }

    bool needs_ct() const;
    bool needs_pet() const;

private:
    template <typename Visitor>
    void visit(Visitor&& v);

    Tensor run_branch(Branch& branch, const Tensor& x, ForwardProbe* probe);
    void initialize();

    ModelConfig cfg_;
    Mode mode_ = Mode::training;
    std::vector<Branch> branches_;
    std::vector<FusionBlock> fusions_;
    std::vector<std::pair<std::string, Linear>> heads_;
    std::optional<GatedUnit> gated_;
};

Network build_network(const ModelConfig& cfg);

/// Logits for a batch; throws ConfigError when a modality the strategy needs is missing.
Tensor forward_classify(Network& net, const ModalityBatch& batch);

std::int64_t parameter_count(Network& net);

} // namespace mfn::nets
