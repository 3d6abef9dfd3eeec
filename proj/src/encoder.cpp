#include "cmpt/encoder.hpp"

#include <cmath>

namespace cmpt {

namespace {

constexpr double kInitSigma = 0.02;
constexpr double kLayerNormEps = 1e-6;

Tensor2D gaussian(int rows, int cols, Rng& rng, double sigma = kInitSigma) {
    Tensor2D t(rows, cols);
    for (double& v : t.data) v = rng.normal(0.0, sigma);
    return t;
}

} // namespace

EmbedderParams EmbedderParams::init(int patch_size, int dim, int max_tokens, Rng& rng) {
    EmbedderParams p;
    p.patch_size = patch_size;
    p.projection = gaussian(patch_size, dim, rng);
    p.positional = gaussian(max_tokens, dim, rng);
    return p;
}

void EmbedderParams::set_trainable(bool trainable) {
    projection.requires_grad = trainable;
    positional.requires_grad = trainable;
}

LoraAdapter LoraAdapter::init(int dim, int rank, double alpha, double dropout_p, Rng& rng) {
    if (rank < 1) {
        throw DimensionError("lora: rank must be at least 1");
    }
    LoraAdapter a;
    a.rank = rank;
    a.alpha = alpha;
    a.dropout_p = dropout_p;
    a.down = gaussian(dim, rank, rng);
    a.up = Tensor2D(rank, dim, 0.0); // zero so the initial contribution vanishes exactly
    a.down.requires_grad = true;
    a.up.requires_grad = true;
    return a;
}

EncoderBase EncoderBase::init(int dim, int n_layers, int heads, int ff_dim, Rng& rng) {
    if (dim % heads != 0) {
        throw DimensionError("encoder: dim must be divisible by heads");
    }
    EncoderBase b;
    b.dim = dim;
    b.heads = heads;
    b.ff_dim = ff_dim;
    b.layers.resize(static_cast<std::size_t>(n_layers));
    for (auto& l : b.layers) {
        l.w_q = gaussian(dim, dim, rng);
        l.w_k = gaussian(dim, dim, rng);
        l.w_v = gaussian(dim, dim, rng);
        l.w_o = gaussian(dim, dim, rng);
        l.w_ff1 = gaussian(dim, ff_dim, rng);
        l.w_ff2 = gaussian(ff_dim, dim, rng);
        l.ln1_gain = Tensor2D(1, dim, 1.0);
        l.ln1_bias = Tensor2D(1, dim, 0.0);
        l.ln2_gain = Tensor2D(1, dim, 1.0);
        l.ln2_bias = Tensor2D(1, dim, 0.0);
    }
    b.final_gain = Tensor2D(1, dim, 1.0);
    b.final_bias = Tensor2D(1, dim, 0.0);
    return b;
}

void EncoderBase::set_trainable(bool trainable) {
    for (auto& l : layers) {
        for (Tensor2D* t : {&l.w_q, &l.w_k, &l.w_v, &l.w_o, &l.w_ff1, &l.w_ff2,
                            &l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias}) {
            t->requires_grad = trainable;
        }
    }
    final_gain.requires_grad = trainable;
    final_bias.requires_grad = trainable;
}

Var embed(Graph& g, const std::vector<double>& raw, EmbedderParams& params) {
    if (params.patch_size < 1 || raw.size() % static_cast<std::size_t>(params.patch_size) != 0) {
        throw DimensionError("embed: raw length not divisible by patch size");
    }
    const int n = static_cast<int>(raw.size()) / params.patch_size;
    if (n > params.positional.rows) {
        throw DimensionError("embed: token count exceeds positional table");
    }
    Tensor2D patches(n, params.patch_size);
    patches.data.assign(raw.begin(), raw.end());
    Var projected = g.matmul(g.input(std::move(patches)), g.param(params.projection));
    Var pos = g.slice_rows(g.param(params.positional), 0, n);
    return g.add(projected, pos);
}

AssembledSequence assemble(Graph& g, Var content, SpecialTokens& specials, bool with_cmpt) {
    const int dim = specials.cls.cols;
    if (g.value(content).cols != dim) {
        throw DimensionError("assemble: content width differs from token width");
    }
    AssembledSequence seq;
    seq.content_rows = g.value(content).rows;
    if (with_cmpt) {
        if (!specials.has_cmpt()) {
            throw DimensionError("assemble: proxy token requested but not present");
        }
        seq.tokens = g.concat_rows({g.param(specials.cmpt), g.param(specials.cls), content});
        seq.cmpt_slot = 0;
        seq.cls_slot = 1;
    } else {
        seq.tokens = g.concat_rows({g.param(specials.cls), content});
        seq.cmpt_slot = -1;
        seq.cls_slot = 0;
    }
    return seq;
}

Var lora_apply(Graph& g, Var x, Tensor2D& base_weight, LoraAdapter* adapter, bool training,
               Rng* lora_rng) {
    Var base = g.matmul(x, g.param(base_weight));
    if (adapter == nullptr) {
        return base;
    }
    if (adapter->rank < 1) {
        throw DimensionError("lora: rank must be at least 1");
    }
    Var low = g.matmul(x, g.param(adapter->down));
    if (training && adapter->dropout_p > 0.0) {
        if (lora_rng == nullptr) {
            throw DimensionError("lora: dropout requested without an rng stream");
        }
        low = g.dropout(low, adapter->dropout_p, *lora_rng);
    }
    Var delta = g.scale(g.matmul(low, g.param(adapter->up)),
                        adapter->alpha / static_cast<double>(adapter->rank));
    return g.add(base, delta);
}

EncodedSequence encode(Graph& g, const AssembledSequence& seq, EncoderBase& base,
                       EncoderAdapters* adapters, bool training, Rng* lora_rng,
                       bool mask_cmpt_from_cls, AttentionSnapshot* capture) {
    if (g.value(seq.tokens).cols != base.dim) {
        throw DimensionError("encode: sequence width differs from encoder dim");
    }
    if (adapters != nullptr && adapters->size() != base.layers.size()) {
        throw DimensionError("encode: missing adapter for a declared target layer");
    }
    const int head_dim = base.dim / base.heads;
    const int rows = g.value(seq.tokens).rows;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    // Additive pre-softmax mask hiding the proxy column from the cls row.
    std::optional<Var> attn_mask;
    if (mask_cmpt_from_cls && seq.cmpt_slot >= 0) {
        Tensor2D m(rows, rows, 0.0);
        m.at(seq.cls_slot, seq.cmpt_slot) = -1e30;
        attn_mask = g.input(std::move(m));
    }

    Var x = seq.tokens;
    for (std::size_t li = 0; li < base.layers.size(); ++li) {
        EncoderLayer& layer = base.layers[li];
        LayerAdapters* la = adapters ? &(*adapters)[li] : nullptr;

        Var h = g.layer_norm_rows(x, g.param(layer.ln1_gain), g.param(layer.ln1_bias), kLayerNormEps);
        Var q = lora_apply(g, h, layer.w_q, la ? &la->query : nullptr, training, lora_rng);
        Var k = lora_apply(g, h, layer.w_k, la ? &la->key : nullptr, training, lora_rng);
        Var v = lora_apply(g, h, layer.w_v, la ? &la->value : nullptr, training, lora_rng);

        std::vector<Var> head_outputs;
        head_outputs.reserve(static_cast<std::size_t>(base.heads));
        const bool last_layer = li + 1 == base.layers.size();
        for (int hd = 0; hd < base.heads; ++hd) {
            const int c0 = hd * head_dim;
            const int c1 = c0 + head_dim;
            Var qh = g.slice_cols(q, c0, c1);
            Var kh = g.slice_cols(k, c0, c1);
            Var vh = g.slice_cols(v, c0, c1);
            Var scores = g.scale(g.matmul(qh, g.transpose(kh)), attn_scale);
            if (attn_mask) {
                scores = g.add(scores, *attn_mask);
            }
            Var attn = g.softmax_rows(scores);
            if (capture != nullptr && last_layer) {
                const Tensor2D& a = g.value(attn);
                auto take_row = [&](int r) {
                    std::vector<double> out(static_cast<std::size_t>(a.cols));
                    for (int c = 0; c < a.cols; ++c) out[static_cast<std::size_t>(c)] = a.at(r, c);
                    return out;
                };
                capture->cls_rows.push_back(take_row(seq.cls_slot));
                if (seq.cmpt_slot >= 0) {
                    capture->cmpt_rows.push_back(take_row(seq.cmpt_slot));
                }
            }
            head_outputs.push_back(g.matmul(attn, vh));
        }
        Var attn_out = base.heads == 1 ? head_outputs[0] : g.concat_cols(head_outputs);
        attn_out = lora_apply(g, attn_out, layer.w_o, la ? &la->output : nullptr, training, lora_rng);
        x = g.add(x, attn_out);

        Var h2 = g.layer_norm_rows(x, g.param(layer.ln2_gain), g.param(layer.ln2_bias), kLayerNormEps);
        Var ff = g.matmul(g.gelu(g.matmul(h2, g.param(layer.w_ff1))), g.param(layer.w_ff2));
        x = g.add(x, ff);
    }
    x = g.layer_norm_rows(x, g.param(base.final_gain), g.param(base.final_bias), kLayerNormEps);

    EncodedSequence out;
    out.tokens = x;
    out.cmpt_slot = seq.cmpt_slot;
    out.cls_slot = seq.cls_slot;
    return out;
}

Var extract(Graph& g, const EncodedSequence& seq, TokenSlot which) {
    int slot = which == TokenSlot::kCls ? seq.cls_slot : seq.cmpt_slot;
    if (slot < 0) {
        throw DimensionError("extract: sequence has no such slot");
    }
    return g.slice_rows(seq.tokens, slot, slot + 1);
}

std::size_t adapter_parameter_count(const EncoderAdapters& adapters) {
    std::size_t count = 0;
    for (const auto& la : adapters) {
        for (const LoraAdapter* a : {&la.query, &la.key, &la.value, &la.output}) {
            count += a->down.size() + a->up.size();
        }
    }
    return count;
}

EncoderAdapters make_adapters(int dim, int n_layers, int rank, double alpha, double dropout_p,
                              Rng& rng) {
    EncoderAdapters adapters;
    adapters.reserve(static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
        adapters.push_back(LayerAdapters{
            LoraAdapter::init(dim, rank, alpha, dropout_p, rng),
            LoraAdapter::init(dim, rank, alpha, dropout_p, rng),
            LoraAdapter::init(dim, rank, alpha, dropout_p, rng),
            LoraAdapter::init(dim, rank, alpha, dropout_p, rng),
        });
    }
    return adapters;
}

} // namespace cmpt
