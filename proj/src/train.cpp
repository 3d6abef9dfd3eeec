#include "cmpt/train.hpp"

#include <cmath>

namespace cmpt {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566;
constexpr std::uint64_t kDropoutTag = 0x64726f70;
constexpr std::uint64_t kLoraTag = 0x6c6f7261;
constexpr std::uint64_t kPretrainTag = 0x70726574;

PresenceMask sample_dropout_outcome(Rng& rng, const std::array<double, 3>& probs) {
    const double u = rng.uniform();
    if (u < probs[0]) return PresenceMask{true, true};
    if (u < probs[0] + probs[1]) return PresenceMask{false, true};
    return PresenceMask{true, false};
}

void clip_gradients(const std::vector<Tensor2D*>& params, double max_norm) {
    double sq = 0.0;
    for (Tensor2D* p : params) {
        for (double g : p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (Tensor2D* p : params) {
        for (double& g : p->grad) g *= scale;
    }
}

} // namespace

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "baseline") return TrainMode::kBaseline;
    if (s == "dropout_only") return TrainMode::kDropoutOnly;
    if (s == "cmpt") return TrainMode::kCmpt;
    throw ConfigError("train: mode must be baseline, dropout_only or cmpt");
}

std::string to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kDropoutOnly: return "dropout_only";
    case TrainMode::kCmpt: return "cmpt";
    }
    return "cmpt";
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be positive");
    if (warmup_epochs < 0 || warmup_epochs > epochs) {
        throw ConfigError("train: warmup_epochs must lie in [0, epochs]");
    }
    if (poly_power < 0.0) throw ConfigError("train: poly_power must be non-negative");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
    if (adam_eps <= 0.0) throw ConfigError("train: adam_eps must be positive");
    if (lambda < 0.0) throw ConfigError("train: lambda must be non-negative");
    const double psum = dropout_probs[0] + dropout_probs[1] + dropout_probs[2];
    if (std::abs(psum - 1.0) > 1e-9 || dropout_probs[0] < 0.0 || dropout_probs[1] < 0.0 ||
        dropout_probs[2] < 0.0) {
        throw ConfigError("train: dropout_probs must be non-negative and sum to 1");
    }
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be non-negative");
}

double poly_lr(int epoch, double step_frac, const TrainConfig& config) {
    if (epoch < config.warmup_epochs) {
        return config.lr * config.warmup_factor;
    }
    const double span = static_cast<double>(config.epochs - config.warmup_epochs);
    if (span <= 0.0) {
        return config.lr;
    }
    const double progress = (static_cast<double>(epoch - config.warmup_epochs) + step_frac) / span;
    return config.lr * std::pow(1.0 - progress, config.poly_power);
}

void AdamWState::init(const std::vector<Tensor2D*>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (Tensor2D* p : params) {
        m.emplace_back(p->size(), 0.0);
        v.emplace_back(p->size(), 0.0);
    }
}

void adamw_step(const std::vector<Tensor2D*>& params, AdamWState& state, double lr_t,
                const TrainConfig& config) {
    if (state.m.size() != params.size()) {
        throw DimensionError("adamw: state does not match parameter list");
    }
    ++state.step;
    const double b1 = config.betas[0];
    const double b2 = config.betas[1];
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor2D& p = *params[pi];
        p.ensure_grad();
        if (state.m[pi].size() != p.size()) {
            throw DimensionError("adamw: state shape does not match parameter");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i];
            state.m[pi][i] = b1 * state.m[pi][i] + (1.0 - b1) * g;
            state.v[pi][i] = b2 * state.v[pi][i] + (1.0 - b2) * g * g;
            const double mhat = state.m[pi][i] / bc1;
            const double vhat = state.v[pi][i] / bc2;
            p.data[i] -= lr_t * (mhat / (std::sqrt(vhat) + config.adam_eps) +
                                 config.weight_decay * p.data[i]);
        }
    }
}

FrozenBase pretrain_unimodal(int modality, const Dataset& dataset, const ModelConfig& model_cfg,
                             const TrainConfig& config, PretrainReport* report) {
    config.validate();
    model_cfg.validate();
    if (modality != 0 && modality != 1) {
        throw ConfigError("pretrain: modality must be 0 or 1");
    }
    const DatasetConfig& dcfg = dataset.config;
    const int patch = modality == 0 ? dcfg.patch_m1 : dcfg.patch_m2;

    Rng init_rng(derive_seed(config.seed, kPretrainTag, static_cast<std::uint64_t>(modality)));
    FrozenBase base;
    base.embedder = EmbedderParams::init(patch, model_cfg.dim, model_cfg.max_tokens, init_rng);
    base.cls = Tensor2D(1, model_cfg.dim);
    for (double& v : base.cls.data) v = init_rng.normal(0.0, 0.02);
    base.encoder = EncoderBase::init(model_cfg.dim, model_cfg.layers, model_cfg.heads,
                                     model_cfg.ff_dim, init_rng);
    base.set_trainable(true);
    ClassifierHead head = ClassifierHead::init(model_cfg.dim, dcfg.n_classes, init_rng);

    // unimodal view: only samples where this modality is physically present
    std::vector<const Sample*> view;
    for (const Sample& s : dataset.train.samples) {
        const bool present = modality == 0 ? s.mask.m1_present : s.mask.m2_present;
        if (present) view.push_back(&s);
    }
    if (view.empty()) {
        throw DataError("pretrain: no samples carry the requested modality");
    }

    std::vector<Tensor2D*> params;
    SpecialTokens specials;
    specials.cls = std::move(base.cls);
    {
        params.push_back(&base.embedder.projection);
        params.push_back(&base.embedder.positional);
        params.push_back(&specials.cls);
        for (auto& l : base.encoder.layers) {
            for (Tensor2D* t : {&l.w_q, &l.w_k, &l.w_v, &l.w_o, &l.w_ff1, &l.w_ff2,
                                &l.ln1_gain, &l.ln1_bias, &l.ln2_gain, &l.ln2_bias}) {
                params.push_back(t);
            }
        }
        params.push_back(&base.encoder.final_gain);
        params.push_back(&base.encoder.final_bias);
        params.push_back(&head.weight);
        params.push_back(&head.bias);
    }

    AdamWState state;
    state.init(params);
    Graph g;
    const int n = static_cast<int>(view.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr_t = poly_lr(epoch, 0.0, config);
        Rng shuffle_rng(derive_seed(config.seed, kShuffleTag, static_cast<std::uint64_t>(modality),
                                    static_cast<std::uint64_t>(epoch)));
        const auto batches = epoch_batches(n, config.batch_size, shuffle_rng);
        for (std::size_t it = 0; it < batches.size(); ++it) {
            g.clear();
            Var task;
            try {
                std::vector<Var> rows;
                std::vector<LabelTarget> targets;
                for (int idx : batches[it]) {
                    const Sample& s = *view[static_cast<std::size_t>(idx)];
                    const auto& raw = modality == 0 ? s.raw_m1 : s.raw_m2;
                    Var content = embed(g, raw, base.embedder);
                    AssembledSequence seq = assemble(g, content, specials, false);
                    EncodedSequence enc = encode(g, seq, base.encoder, nullptr, true, nullptr);
                    Var cls = extract(g, enc, TokenSlot::kCls);
                    rows.push_back(predict(g, FusedToken{cls}, head));
                    targets.push_back(s.target);
                }
                Var logits = rows.size() == 1 ? rows[0] : g.concat_rows(rows);
                task = task_loss(g, logits, targets);
            } catch (const NumericsError& e) {
                throw TrainingDivergenceError(std::string("pretrain diverged: ") + e.what(),
                                              static_cast<int>(it));
            }
            for (Tensor2D* p : params) p->zero_grad();
            g.backward(task);
            if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
            adamw_step(params, state, lr_t, config);
        }
    }

    if (report != nullptr) {
        long correct = 0;
        long total = 0;
        for (const Sample& s : dataset.test.samples) {
            const bool present = modality == 0 ? s.mask.m1_present : s.mask.m2_present;
            if (!present || s.target.mode != LabelTarget::Mode::kSingle) continue;
            g.clear();
            const auto& raw = modality == 0 ? s.raw_m1 : s.raw_m2;
            Var content = embed(g, raw, base.embedder);
            AssembledSequence seq = assemble(g, content, specials, false);
            EncodedSequence enc = encode(g, seq, base.encoder, nullptr, false, nullptr);
            Var logits = predict(g, FusedToken{extract(g, enc, TokenSlot::kCls)}, head);
            const Tensor2D& row = g.value(logits);
            int pred = 0;
            for (int c = 1; c < row.cols; ++c) {
                if (row.at(0, c) > row.at(0, pred)) pred = c;
            }
            if (pred == s.target.index) ++correct;
            ++total;
        }
        report->test_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
    }

    base.cls = std::move(specials.cls);
    base.set_trainable(false);
    return base; // pretraining head is discarded
}

std::vector<EpochLog> train_model(CmptModel& model, const Split& train_split,
                                  const TrainConfig& config) {
    config.validate();
    if (model.use_cmpt != (config.mode == TrainMode::kCmpt)) {
        throw ConfigError("train: model variant does not match the training mode");
    }
    const int n = static_cast<int>(train_split.samples.size());
    if (n == 0) {
        throw DataError("train: empty split");
    }

    std::vector<Tensor2D*> params = model.trainable_tensors();
    AdamWState state;
    state.init(params);

    std::vector<EpochLog> log;
    log.reserve(static_cast<std::size_t>(config.epochs));
    Graph g;
    const bool with_dropout = config.mode != TrainMode::kBaseline;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr_t = poly_lr(epoch, 0.0, config);
        Rng shuffle_rng(derive_seed(config.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
        const auto batches = epoch_batches(n, config.batch_size, shuffle_rng);

        double task_sum = 0.0;
        double align_sum = 0.0;
        double total_sum = 0.0;
        long complete_seen = 0;
        long seen = 0;

        for (std::size_t it = 0; it < batches.size(); ++it) {
            // Dedicated per-iteration streams so toggling evaluation or
            // logging never perturbs the trajectory.
            Rng drop_rng(derive_seed(config.seed, kDropoutTag, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(it)));
            Rng lora_rng(derive_seed(config.seed, kLoraTag, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(it)));

            std::vector<const Sample*> batch;
            std::vector<PresenceMask> masks;
            for (int idx : batches[it]) {
                const Sample& s = train_split.samples[static_cast<std::size_t>(idx)];
                batch.push_back(&s);
                if (s.mask.complete() && with_dropout) {
                    masks.push_back(sample_dropout_outcome(drop_rng, config.dropout_probs));
                } else {
                    masks.push_back(s.mask);
                }
            }

            g.clear();
            CmptModel::BatchLoss loss;
            try {
                loss = model.batch_loss(g, batch, masks, config.lambda, true, &lora_rng);
            } catch (const NumericsError& e) {
                throw TrainingDivergenceError(std::string("training diverged: ") + e.what(),
                                              static_cast<int>(it));
            }
            for (Tensor2D* p : params) p->zero_grad();
            g.backward(loss.node);
            if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
            adamw_step(params, state, lr_t, config);

            const double bs = static_cast<double>(batch.size());
            task_sum += loss.breakdown.task * bs;
            total_sum += loss.breakdown.total * bs;
            align_sum += loss.breakdown.align * loss.breakdown.n_complete_in_batch;
            for (const Sample* s : batch) {
                if (s->mask.complete()) ++complete_seen;
            }
            seen += static_cast<long>(batch.size());
        }

        EpochLog e;
        e.epoch = epoch;
        e.lr = lr_t;
        e.task = task_sum / static_cast<double>(seen);
        e.align = complete_seen > 0 ? align_sum / static_cast<double>(complete_seen) : 0.0;
        e.total = total_sum / static_cast<double>(seen);
        e.n_complete_seen = complete_seen;
        log.push_back(e);
    }
    return log;
}

} // namespace cmpt
