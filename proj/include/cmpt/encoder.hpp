#pragma once

#include <optional>
#include <vector>

#include "cmpt/graph.hpp"

namespace cmpt {

// Frozen patch embedding: raw vectors are cut into patches, linearly
// projected to model width and given positional offsets.
struct EmbedderParams {
    int patch_size = 0;
    Tensor2D projection; // patch_size x dim
    Tensor2D positional; // max_tokens x dim

    static EmbedderParams init(int patch_size, int dim, int max_tokens, Rng& rng);
    void set_trainable(bool trainable);
};

// Per-modality special tokens. The class token is frozen once pretraining
// ends; the proxy token stays trainable and has zero width until created.
struct SpecialTokens {
    Tensor2D cls;  // 1 x dim
    Tensor2D cmpt; // 1 x dim; empty when the model variant carries no proxy token
    bool has_cmpt() const { return cmpt.size() > 0; }
};

enum class TokenSlot { kCmpt, kCls };

// Token matrix on the tape plus the fixed slot layout that produced it.
struct AssembledSequence {
    Var tokens;
    int cmpt_slot = -1; // -1 when assembled without a proxy token
    int cls_slot = 0;
    int content_rows = 0;
    int total_rows() const { return content_rows + (cmpt_slot >= 0 ? 2 : 1); }
};

struct EncodedSequence {
    Var tokens;
    int cmpt_slot = -1;
    int cls_slot = 0;
};

// Rank-r factor pair attached to one frozen projection.
// up starts at zero so the adapted forward initially equals the frozen one.
struct LoraAdapter {
    Tensor2D down; // dim x rank
    Tensor2D up;   // rank x dim
    int rank = 1;
    double alpha = 1.0;
    double dropout_p = 0.0;

    static LoraAdapter init(int dim, int rank, double alpha, double dropout_p, Rng& rng);
};

struct LayerAdapters {
    LoraAdapter query, key, value, output;
};

using EncoderAdapters = std::vector<LayerAdapters>; // one entry per layer

struct EncoderLayer {
    Tensor2D w_q, w_k, w_v, w_o;   // dim x dim
    Tensor2D w_ff1;                // dim x ff_dim
    Tensor2D w_ff2;                // ff_dim x dim
    Tensor2D ln1_gain, ln1_bias;   // 1 x dim
    Tensor2D ln2_gain, ln2_bias;   // 1 x dim
};

// Pre-norm transformer stack; all weights frozen during the proxy-token stage.
struct EncoderBase {
    int dim = 0;
    int heads = 0;
    int ff_dim = 0;
    std::vector<EncoderLayer> layers;
    Tensor2D final_gain, final_bias;

    static EncoderBase init(int dim, int n_layers, int heads, int ff_dim, Rng& rng);
    void set_trainable(bool trainable);
};

// Last-layer attention rows for the special slots, one row per head.
struct AttentionSnapshot {
    std::vector<std::vector<double>> cls_rows;
    std::vector<std::vector<double>> cmpt_rows;
};

// Eq.-style patch embedding of one raw modality vector -> N x dim tokens.
Var embed(Graph& g, const std::vector<double>& raw, EmbedderParams& params);

// Prepends the special tokens: [cmpt, cls, content...] (cls first when no
// proxy token is used).
AssembledSequence assemble(Graph& g, Var content, SpecialTokens& specials, bool with_cmpt);

// x @ base (+ alpha/r * drop(x @ down) @ up when an adapter is attached).
Var lora_apply(Graph& g, Var x, Tensor2D& base_weight, LoraAdapter* adapter, bool training,
               Rng* lora_rng);

EncodedSequence encode(Graph& g, const AssembledSequence& seq, EncoderBase& base,
                       EncoderAdapters* adapters, bool training, Rng* lora_rng,
                       bool mask_cmpt_from_cls = false,
                       AttentionSnapshot* capture = nullptr);

Var extract(Graph& g, const EncodedSequence& seq, TokenSlot which);

// Number of trainable scalars across all factor pairs: 4 * L * 2 * dim * rank.
std::size_t adapter_parameter_count(const EncoderAdapters& adapters);

EncoderAdapters make_adapters(int dim, int n_layers, int rank, double alpha, double dropout_p,
                              Rng& rng);

} // namespace cmpt
