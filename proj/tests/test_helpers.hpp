#pragma once

#include "cmpt/model.hpp"

namespace cmpt::testing {

// Tiny dimensions so model-level tests stay fast.
inline ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.dim = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 32;
    cfg.max_tokens = 8;
    cfg.lora_rank = 1;
    cfg.lora_alpha = 1.0;
    cfg.lora_dropout = 0.1;
    return cfg;
}

inline DatasetConfig tiny_dataset_config() {
    DatasetConfig cfg;
    cfg.n_classes = 4;
    cfg.latent_dim = 8;
    cfg.raw_dim_m1 = 16;
    cfg.raw_dim_m2 = 16;
    cfg.patch_m1 = 4;
    cfg.patch_m2 = 4;
    cfg.noise_m1 = 0.3;
    cfg.noise_m2 = 0.3;
    cfg.redundancy = 0.7;
    cfg.exclusive_m1 = 1;
    cfg.exclusive_m2 = 1;
    cfg.train_size = 160;
    cfg.val_size = 20;
    cfg.test_size = 60;
    cfg.seed = 7;
    return cfg;
}

inline FrozenBase random_base(const ModelConfig& cfg, int patch_size, std::uint64_t seed) {
    Rng rng(seed);
    FrozenBase base;
    base.embedder = EmbedderParams::init(patch_size, cfg.dim, cfg.max_tokens, rng);
    base.cls = Tensor2D(1, cfg.dim);
    for (double& v : base.cls.data) v = rng.normal(0.0, 0.02);
    base.encoder = EncoderBase::init(cfg.dim, cfg.layers, cfg.heads, cfg.ff_dim, rng);
    base.set_trainable(false);
    return base;
}

inline CmptModel tiny_model(bool use_cmpt = true, std::uint64_t seed = 42) {
    ModelConfig cfg = tiny_model_config();
    DatasetConfig dcfg = tiny_dataset_config();
    return CmptModel::build(cfg, use_cmpt, random_base(cfg, dcfg.patch_m1, seed),
                            random_base(cfg, dcfg.patch_m2, seed + 1), dcfg.n_classes, seed + 2);
}

inline Sample random_sample(const DatasetConfig& dcfg, Rng& rng, bool m1 = true, bool m2 = true) {
    Sample s;
    s.raw_m1.assign(static_cast<std::size_t>(dcfg.raw_dim_m1), 0.0);
    s.raw_m2.assign(static_cast<std::size_t>(dcfg.raw_dim_m2), 0.0);
    if (m1) {
        for (double& v : s.raw_m1) v = rng.normal();
    }
    if (m2) {
        for (double& v : s.raw_m2) v = rng.normal();
    }
    s.mask = PresenceMask{m1, m2};
    s.target = LabelTarget::single(rng.uniform_int(dcfg.n_classes));
    return s;
}

} // namespace cmpt::testing
