#include "cmpt/model.hpp"

namespace cmpt {

namespace {

constexpr std::uint64_t kCmptTokenTag = 0x636d7074;
constexpr std::uint64_t kAdapterTag = 0x61646170;
constexpr std::uint64_t kHeadTag = 0x68656164;

} // namespace

void ModelConfig::validate() const {
    if (dim < 1 || layers < 1 || heads < 1 || ff_dim < 1 || max_tokens < 1) {
        throw ConfigError("model: dims and layer counts must be positive");
    }
    if (dim % heads != 0) {
        throw ConfigError("model: dim must be divisible by heads");
    }
    if (lora_rank < 1) {
        throw ConfigError("model: lora_rank must be at least 1");
    }
    if (lora_dropout < 0.0 || lora_dropout >= 1.0) {
        throw ConfigError("model: lora_dropout must lie in [0, 1)");
    }
    if (cmpt_init != "cls_noise" && cmpt_init != "zeros_noise") {
        throw ConfigError("model: cmpt_init must be 'cls_noise' or 'zeros_noise'");
    }
}

void FrozenBase::set_trainable(bool trainable) {
    embedder.set_trainable(trainable);
    cls.requires_grad = trainable;
    encoder.set_trainable(trainable);
}

CmptModel CmptModel::build(const ModelConfig& cfg, bool use_cmpt, FrozenBase base_m1,
                           FrozenBase base_m2, int n_classes, std::uint64_t init_seed) {
    cfg.validate();
    CmptModel m;
    m.cfg = cfg;
    m.use_cmpt = use_cmpt;
    m.n_classes = n_classes;

    FrozenBase* bases[2] = {&base_m1, &base_m2};
    for (int mod = 0; mod < 2; ++mod) {
        bases[mod]->set_trainable(false);
        m.patch_sizes[static_cast<std::size_t>(mod)] = bases[mod]->embedder.patch_size;
        m.embedders[static_cast<std::size_t>(mod)] = std::move(bases[mod]->embedder);
        m.specials[static_cast<std::size_t>(mod)].cls = std::move(bases[mod]->cls);
        m.encoders[static_cast<std::size_t>(mod)] = std::move(bases[mod]->encoder);

        if (use_cmpt) {
            Rng rng(derive_seed(init_seed, kCmptTokenTag, static_cast<std::uint64_t>(mod)));
            Tensor2D token(1, cfg.dim, 0.0);
            if (cfg.cmpt_init == "cls_noise") {
                token.data = m.specials[static_cast<std::size_t>(mod)].cls.data;
            }
            for (double& v : token.data) v += rng.normal(0.0, 0.02);
            token.requires_grad = true;
            m.specials[static_cast<std::size_t>(mod)].cmpt = std::move(token);
        }

        Rng arng(derive_seed(init_seed, kAdapterTag, static_cast<std::uint64_t>(mod)));
        m.adapters[static_cast<std::size_t>(mod)] =
            make_adapters(cfg.dim, cfg.layers, cfg.lora_rank, cfg.lora_alpha, cfg.lora_dropout, arng);
    }

    Rng hrng(derive_seed(init_seed, kHeadTag));
    m.head = ClassifierHead::init(cfg.dim, n_classes, hrng);
    return m;
}

CmptModel CmptModel::empty(const ModelConfig& cfg, bool use_cmpt, int n_classes, int patch_m1,
                           int patch_m2) {
    cfg.validate();
    CmptModel m;
    m.cfg = cfg;
    m.use_cmpt = use_cmpt;
    m.n_classes = n_classes;
    m.patch_sizes = {patch_m1, patch_m2};
    for (int mod = 0; mod < 2; ++mod) {
        auto& e = m.embedders[static_cast<std::size_t>(mod)];
        e.patch_size = m.patch_sizes[static_cast<std::size_t>(mod)];
        e.projection = Tensor2D(e.patch_size, cfg.dim);
        e.positional = Tensor2D(cfg.max_tokens, cfg.dim);
        m.specials[static_cast<std::size_t>(mod)].cls = Tensor2D(1, cfg.dim);
        if (use_cmpt) {
            m.specials[static_cast<std::size_t>(mod)].cmpt = Tensor2D(1, cfg.dim);
            m.specials[static_cast<std::size_t>(mod)].cmpt.requires_grad = true;
        }
        EncoderBase base;
        base.dim = cfg.dim;
        base.heads = cfg.heads;
        base.ff_dim = cfg.ff_dim;
        base.layers.resize(static_cast<std::size_t>(cfg.layers));
        for (auto& l : base.layers) {
            l.w_q = Tensor2D(cfg.dim, cfg.dim);
            l.w_k = Tensor2D(cfg.dim, cfg.dim);
            l.w_v = Tensor2D(cfg.dim, cfg.dim);
            l.w_o = Tensor2D(cfg.dim, cfg.dim);
            l.w_ff1 = Tensor2D(cfg.dim, cfg.ff_dim);
            l.w_ff2 = Tensor2D(cfg.ff_dim, cfg.dim);
            l.ln1_gain = Tensor2D(1, cfg.dim);
            l.ln1_bias = Tensor2D(1, cfg.dim);
            l.ln2_gain = Tensor2D(1, cfg.dim);
            l.ln2_bias = Tensor2D(1, cfg.dim);
        }
        base.final_gain = Tensor2D(1, cfg.dim);
        base.final_bias = Tensor2D(1, cfg.dim);
        m.encoders[static_cast<std::size_t>(mod)] = std::move(base);

        EncoderAdapters adapters(static_cast<std::size_t>(cfg.layers));
        for (auto& la : adapters) {
            for (LoraAdapter* a : {&la.query, &la.key, &la.value, &la.output}) {
                a->rank = cfg.lora_rank;
                a->alpha = cfg.lora_alpha;
                a->dropout_p = cfg.lora_dropout;
                a->down = Tensor2D(cfg.dim, cfg.lora_rank);
                a->up = Tensor2D(cfg.lora_rank, cfg.dim);
                a->down.requires_grad = true;
                a->up.requires_grad = true;
            }
        }
        m.adapters[static_cast<std::size_t>(mod)] = std::move(adapters);
    }
    m.head.weight = Tensor2D(cfg.dim, n_classes);
    m.head.bias = Tensor2D(1, n_classes);
    m.head.set_trainable(true);
    return m;
}

std::vector<NamedTensor> CmptModel::named_tensors() {
    std::vector<NamedTensor> out;
    for (int mod = 0; mod < 2; ++mod) {
        const std::string p = "m" + std::to_string(mod + 1) + ".";
        auto& e = embedders[static_cast<std::size_t>(mod)];
        out.push_back({p + "embed.projection", &e.projection});
        out.push_back({p + "embed.positional", &e.positional});
        out.push_back({p + "cls", &specials[static_cast<std::size_t>(mod)].cls});
        if (use_cmpt) {
            out.push_back({p + "cmpt", &specials[static_cast<std::size_t>(mod)].cmpt});
        }
        auto& enc = encoders[static_cast<std::size_t>(mod)];
        for (std::size_t li = 0; li < enc.layers.size(); ++li) {
            const std::string lp = p + "layer" + std::to_string(li) + ".";
            auto& l = enc.layers[li];
            out.push_back({lp + "w_q", &l.w_q});
            out.push_back({lp + "w_k", &l.w_k});
            out.push_back({lp + "w_v", &l.w_v});
            out.push_back({lp + "w_o", &l.w_o});
            out.push_back({lp + "w_ff1", &l.w_ff1});
            out.push_back({lp + "w_ff2", &l.w_ff2});
            out.push_back({lp + "ln1_gain", &l.ln1_gain});
            out.push_back({lp + "ln1_bias", &l.ln1_bias});
            out.push_back({lp + "ln2_gain", &l.ln2_gain});
            out.push_back({lp + "ln2_bias", &l.ln2_bias});
            auto& la = adapters[static_cast<std::size_t>(mod)][li];
            out.push_back({lp + "lora_q.down", &la.query.down});
            out.push_back({lp + "lora_q.up", &la.query.up});
            out.push_back({lp + "lora_k.down", &la.key.down});
            out.push_back({lp + "lora_k.up", &la.key.up});
            out.push_back({lp + "lora_v.down", &la.value.down});
            out.push_back({lp + "lora_v.up", &la.value.up});
            out.push_back({lp + "lora_o.down", &la.output.down});
            out.push_back({lp + "lora_o.up", &la.output.up});
        }
        out.push_back({p + "final_gain", &enc.final_gain});
        out.push_back({p + "final_bias", &enc.final_bias});
    }
    out.push_back({"head.weight", &head.weight});
    out.push_back({"head.bias", &head.bias});
    return out;
}

std::vector<Tensor2D*> CmptModel::trainable_tensors() {
    std::vector<Tensor2D*> out;
    for (const auto& nt : named_tensors()) {
        if (nt.tensor->requires_grad) out.push_back(nt.tensor);
    }
    return out;
}

std::size_t CmptModel::trainable_parameter_count() {
    std::size_t count = 0;
    for (Tensor2D* t : trainable_tensors()) count += t->size();
    return count;
}

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t CmptModel::frozen_checksum() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& nt : named_tensors()) {
        if (nt.tensor->requires_grad) continue;
        h = fnv1a(h, nt.tensor->data.data(), nt.tensor->data.size() * sizeof(double));
    }
    return h;
}

Var CmptModel::encode_modality(Graph& g, int modality, const std::vector<double>& raw,
                               bool training, Rng* lora_rng, Var* cmpt_out,
                               AttentionSnapshot* capture) {
    const std::size_t mi = static_cast<std::size_t>(modality);
    Var content = embed(g, raw, embedders[mi]);
    AssembledSequence seq = assemble(g, content, specials[mi], use_cmpt);
    EncodedSequence enc = encode(g, seq, encoders[mi], &adapters[mi], training, lora_rng,
                                 cfg.mask_cmpt_from_cls, capture);
    if (cmpt_out != nullptr) {
        *cmpt_out = use_cmpt ? extract(g, enc, TokenSlot::kCmpt) : Var{};
    }
    return extract(g, enc, TokenSlot::kCls);
}

CmptModel::SampleTokens CmptModel::forward_tokens(Graph& g, const Sample& sample,
                                                  const PresenceMask& effective_mask,
                                                  bool training, Rng* lora_rng,
                                                  std::array<AttentionSnapshot, 2>* capture) {
    SampleTokens t;
    if (use_cmpt) {
        if (sample.mask.m1_present) {
            t.cls1 = encode_modality(g, 0, sample.raw_m1, training, lora_rng, &t.cmpt1,
                                     capture ? &(*capture)[0] : nullptr);
            t.forwarded_m1 = true;
        }
        if (sample.mask.m2_present) {
            t.cls2 = encode_modality(g, 1, sample.raw_m2, training, lora_rng, &t.cmpt2,
                                     capture ? &(*capture)[1] : nullptr);
            t.forwarded_m2 = true;
        }
    } else {
        // Placeholder behavior: absent or dropped modalities run through
        // their encoder as all-zeros input.
        auto raw_or_zero = [](const std::vector<double>& raw, bool live) -> std::vector<double> {
            if (live) return raw;
            return std::vector<double>(raw.size(), 0.0);
        };
        const bool live1 = sample.mask.m1_present && effective_mask.m1_present;
        const bool live2 = sample.mask.m2_present && effective_mask.m2_present;
        std::vector<double> raw1 = raw_or_zero(sample.raw_m1, live1);
        std::vector<double> raw2 = raw_or_zero(sample.raw_m2, live2);
        t.cls1 = encode_modality(g, 0, raw1, training, lora_rng, nullptr,
                                 capture ? &(*capture)[0] : nullptr);
        t.cls2 = encode_modality(g, 1, raw2, training, lora_rng, nullptr,
                                 capture ? &(*capture)[1] : nullptr);
        t.forwarded_m1 = t.forwarded_m2 = true;
    }
    return t;
}

Var CmptModel::sample_logits(Graph& g, const SampleTokens& tokens,
                             const PresenceMask& effective_mask) {
    if (use_cmpt) {
        GateOutput gated = gate(effective_mask, tokens.cls1, tokens.cls2, tokens.cmpt1, tokens.cmpt2);
        return predict(g, fuse(g, gated), head);
    }
    return predict(g, FusedToken{g.add(tokens.cls1, tokens.cls2)}, head);
}

CmptModel::BatchLoss CmptModel::batch_loss(Graph& g, std::span<const Sample* const> samples,
                                           std::span<const PresenceMask> effective_masks,
                                           double lambda, bool training, Rng* lora_rng) {
    if (samples.empty() || samples.size() != effective_masks.size()) {
        throw DimensionError("batch_loss: one effective mask per sample required");
    }
    std::vector<Var> logit_rows;
    logit_rows.reserve(samples.size());
    std::vector<LabelTarget> targets;
    targets.reserve(samples.size());
    std::vector<AlignmentPair> pairs;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = *samples[i];
        SampleTokens tokens = forward_tokens(g, s, effective_masks[i], training, lora_rng);
        logit_rows.push_back(sample_logits(g, tokens, effective_masks[i]));
        targets.push_back(s.target);
        if (use_cmpt && s.mask.complete()) {
            pairs.push_back(AlignmentPair{tokens.cmpt1, tokens.cls1, tokens.cmpt2, tokens.cls2});
        }
    }

    Var logits = logit_rows.size() == 1 ? logit_rows[0] : g.concat_rows(logit_rows);
    Var task = task_loss(g, logits, targets);
    auto [align, n_complete] = alignment_loss(g, pairs, !cfg.align_symmetric);
    TotalLoss total = total_loss(g, task, align, lambda, n_complete);
    return BatchLoss{total.node, total.breakdown};
}

} // namespace cmpt
