#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "cmpt/data.hpp"
#include "cmpt/encoder.hpp"
#include "cmpt/fusion.hpp"
#include "cmpt/objectives.hpp"

namespace cmpt {

struct ModelConfig {
    int dim = 32;
    int layers = 2;
    int heads = 2;
    int ff_dim = 64;
    int max_tokens = 16;
    int lora_rank = 1;
    double lora_alpha = 1.0;
    double lora_dropout = 0.1;
    std::string cmpt_init = "cls_noise"; // "cls_noise" | "zeros_noise"
    bool align_symmetric = false;        // let alignment gradients reach the cls operands
    bool mask_cmpt_from_cls = false;     // hide the proxy column from the cls attention row

    void validate() const;
};

// Output of unimodal pretraining: everything the proxy-token stage keeps frozen.
struct FrozenBase {
    EmbedderParams embedder;
    Tensor2D cls; // 1 x dim
    EncoderBase encoder;

    void set_trainable(bool trainable);
};

struct NamedTensor {
    std::string name;
    Tensor2D* tensor;
};

// Two adapted encoders, gating fusion and a linear head. `use_cmpt` selects
// the proxy-token variant; without it the model is the plain
// placeholder-through-encoder baseline used by the training-mode ablation.
class CmptModel {
public:
    ModelConfig cfg;
    bool use_cmpt = true;
    int n_classes = 0;
    std::array<int, 2> patch_sizes{0, 0};

    std::array<EmbedderParams, 2> embedders;
    std::array<SpecialTokens, 2> specials;
    std::array<EncoderBase, 2> encoders;
    std::array<EncoderAdapters, 2> adapters;
    ClassifierHead head;

    static CmptModel build(const ModelConfig& cfg, bool use_cmpt, FrozenBase base_m1,
                           FrozenBase base_m2, int n_classes, std::uint64_t init_seed);
    // Zero-filled tensors of the right shapes; checkpoint loading fills them.
    static CmptModel empty(const ModelConfig& cfg, bool use_cmpt, int n_classes, int patch_m1,
                           int patch_m2);

    std::vector<NamedTensor> named_tensors();
    std::vector<Tensor2D*> trainable_tensors();
    std::size_t trainable_parameter_count();
    std::uint64_t frozen_checksum();

    struct SampleTokens {
        Var cls1, cmpt1, cls2, cmpt2;
        bool forwarded_m1 = false;
        bool forwarded_m2 = false;
    };

    // Runs the per-modality encoders for one sample. For the proxy-token
    // variant only physically present modalities are forwarded (absent ones
    // are discarded by the gate anyway); the baseline variant forwards both,
    // feeding zero placeholders for modalities absent from effective_mask.
    SampleTokens forward_tokens(Graph& g, const Sample& sample, const PresenceMask& effective_mask,
                                bool training, Rng* lora_rng,
                                std::array<AttentionSnapshot, 2>* capture = nullptr);

    // Gate (or placeholder fusion) + head for one sample.
    Var sample_logits(Graph& g, const SampleTokens& tokens, const PresenceMask& effective_mask);

    struct BatchLoss {
        Var node;
        LossBreakdown breakdown;
    };

    // Stacks per-sample logits into the task loss and adds the lambda-weighted
    // alignment term over physically complete samples. effective_masks carry
    // the per-sample dropout outcome during training (physical masks otherwise).
    BatchLoss batch_loss(Graph& g, std::span<const Sample* const> samples,
                         std::span<const PresenceMask> effective_masks, double lambda,
                         bool training, Rng* lora_rng);

private:
    Var encode_modality(Graph& g, int modality, const std::vector<double>& raw, bool training,
                        Rng* lora_rng, Var* cmpt_out, AttentionSnapshot* capture);
};

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t len);

} // namespace cmpt
