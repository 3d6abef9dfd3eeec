#include "cmpt/pipeline.hpp"

#include <filesystem>
#include <fstream>

namespace cmpt::pipeline {

namespace {

using nlohmann::json;

constexpr std::uint64_t kModelInitTag = 0x696e6974;
constexpr std::uint64_t kEvalTag = 0x6576616c;
constexpr std::uint64_t kTrainMaskTag = 0x746d736b;
constexpr std::uint64_t kGradcheckTag = 0x67726164;

void ensure_parent_dir(const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
}

json stats_json(const SplitStats& s) {
    return json{{"n_complete", s.n_complete}, {"n_m1_only", s.n_m1_only}, {"n_m2_only", s.n_m2_only}};
}

Dataset load_data_checked(const RunConfig& config) {
    if (!std::filesystem::exists(config.paths.data)) {
        throw DataError("dataset file not found (run gen-data first): " + config.paths.data);
    }
    return load_dataset(config.paths.data);
}

std::pair<FrozenBase, FrozenBase> load_bases_checked(const RunConfig& config) {
    const std::string p1 = config.paths.bases_dir + "/base_m1.ckpt";
    const std::string p2 = config.paths.bases_dir + "/base_m2.ckpt";
    if (!std::filesystem::exists(p1) || !std::filesystem::exists(p2)) {
        throw DataError("pretrained bases not found (run pretrain first): " + p1 + ", " + p2);
    }
    return {load_bases(p1), load_bases(p2)};
}

CmptModel load_model_checked(const RunConfig& config) {
    if (!std::filesystem::exists(config.paths.model)) {
        throw DataError("model checkpoint not found (run train first): " + config.paths.model);
    }
    return load_model(config.paths.model);
}

} // namespace

json epoch_log_to_json(const EpochLog& e) {
    return json{{"epoch", e.epoch},   {"lr", e.lr},       {"task", e.task},
                {"align", e.align},   {"total", e.total}, {"n_complete_seen", e.n_complete_seen}};
}

json gen_data(const RunConfig& config) {
    DatasetConfig dcfg = config.dataset;
    dcfg.seed = config.seed;
    Dataset dataset = generate(dcfg);
    ensure_parent_dir(config.paths.data);
    save_dataset(dataset, config.paths.data);
    return json{{"path", config.paths.data},
                {"train", stats_json(dataset.train.stats)},
                {"val", stats_json(dataset.val.stats)},
                {"test", stats_json(dataset.test.stats)}};
}

void pretrain(const RunConfig& config) {
    Dataset dataset = load_data_checked(config);
    TrainConfig pcfg = config.pretrain;
    pcfg.seed = config.seed;
    std::filesystem::create_directories(config.paths.bases_dir);
    for (int modality = 0; modality < 2; ++modality) {
        FrozenBase base = pretrain_unimodal(modality, dataset, config.model, pcfg);
        const std::string path =
            config.paths.bases_dir + "/base_m" + std::to_string(modality + 1) + ".ckpt";
        json meta{{"seed", config.seed}, {"modality", modality + 1}, {"epochs", pcfg.epochs}};
        save_bases(path, base, meta);
    }
}

std::vector<EpochLog> train(const RunConfig& config) {
    Dataset dataset = load_data_checked(config);
    auto [base_m1, base_m2] = load_bases_checked(config);

    const MissingProtocol protocol = MissingProtocol::parse(config.protocol_train);
    if (protocol.kind != ProtocolKind::kComplete) {
        apply_protocol(dataset.train, protocol, derive_seed(config.seed, kTrainMaskTag));
    }

    TrainConfig tcfg = config.train;
    tcfg.seed = config.seed;
    const bool use_cmpt = tcfg.mode == TrainMode::kCmpt;
    CmptModel model = CmptModel::build(config.model, use_cmpt, std::move(base_m1),
                                       std::move(base_m2), dataset.config.n_classes,
                                       derive_seed(config.seed, kModelInitTag));
    std::vector<EpochLog> log = train_model(model, dataset.train, tcfg);

    ensure_parent_dir(config.paths.model);
    json meta{{"seed", config.seed},
              {"epoch", tcfg.epochs},
              {"train_protocol", protocol.to_string()},
              {"train_stats", stats_json(dataset.train.stats)},
              {"config_echo", config.to_json()}};
    save_model(config.paths.model, model, meta);

    ensure_parent_dir(config.paths.train_log);
    std::ofstream out(config.paths.train_log, std::ios::binary);
    if (!out) {
        throw DataError("cannot write train log: " + config.paths.train_log);
    }
    for (const EpochLog& e : log) {
        out << epoch_log_to_json(e).dump() << "\n";
    }
    return log;
}

json eval(const RunConfig& config, const std::string& protocol_override,
          const std::string& attention_path) {
    Dataset dataset = load_data_checked(config);
    CmptModel model = load_model_checked(config);
    const MissingProtocol protocol = MissingProtocol::parse(
        protocol_override.empty() ? config.protocol_eval : protocol_override);
    const std::uint64_t eval_seed = derive_seed(config.seed, kEvalTag);

    Metrics metrics = evaluate(model, dataset.test, protocol, eval_seed);
    json report = eval_report(metrics, config.to_json());
    ensure_parent_dir(config.paths.report);
    emit_report(report, ReportFormat::kJson, config.paths.report);

    if (!attention_path.empty()) {
        json dump = attention_dump(model, dataset.test, protocol, eval_seed, 8);
        ensure_parent_dir(attention_path);
        std::ofstream out(attention_path, std::ios::binary);
        if (!out) {
            throw DataError("cannot write attention dump: " + attention_path);
        }
        out << dump.dump(2) << "\n";
    }
    return report;
}

json sweep(const RunConfig& config, int jobs) {
    Dataset dataset = load_data_checked(config);
    CmptModel model = load_model_checked(config);
    const std::uint64_t eval_seed = derive_seed(config.seed, kEvalTag);
    auto points = sweep_missing(model, dataset.test, config.sweep_points, eval_seed, jobs);
    json report = sweep_report(points, config.to_json());
    ensure_parent_dir(config.paths.report);
    emit_report(report, ReportFormat::kJson, config.paths.report);
    return report;
}

json ablate(const RunConfig& config, int jobs) {
    Dataset dataset = load_data_checked(config);
    auto [base_m1, base_m2] = load_bases_checked(config);

    const MissingProtocol protocol = MissingProtocol::parse(config.protocol_train);
    if (protocol.kind != ProtocolKind::kComplete) {
        apply_protocol(dataset.train, protocol, derive_seed(config.seed, kTrainMaskTag));
    }
    TrainConfig tcfg = config.train;
    tcfg.seed = config.seed;

    AblationGrid grid = run_ablation(config.ablation_axis, config.ablation_values, dataset.train,
                                     dataset.test, base_m1, base_m2, config.model, tcfg,
                                     dataset.config.n_classes, derive_seed(config.seed, kEvalTag),
                                     jobs);
    json report = ablation_report(grid, config.to_json());
    ensure_parent_dir(config.paths.report);
    emit_report(report, ReportFormat::kJson, config.paths.report);
    return report;
}

GradCheckReport gradcheck(const RunConfig& config, std::uint64_t seed) {
    // Two synthetic samples at the config's dimensions: one complete (both
    // gate paths + alignment) and one with modality 1 missing.
    //
    // Central differences measure total derivatives, so the check runs the
    // fully differentiable alignment variant; the regression-target detach
    // would otherwise show up as a spurious mismatch. Its exact-zero
    // gradient contract has a dedicated test.
    Rng rng(derive_seed(seed, kGradcheckTag));
    const DatasetConfig& d = config.dataset;

    auto make_base = [&](int patch) {
        FrozenBase base;
        base.embedder = EmbedderParams::init(patch, config.model.dim, config.model.max_tokens, rng);
        base.cls = Tensor2D(1, config.model.dim);
        for (double& v : base.cls.data) v = rng.normal(0.0, 0.02);
        base.encoder = EncoderBase::init(config.model.dim, config.model.layers, config.model.heads,
                                         config.model.ff_dim, rng);
        base.set_trainable(false);
        return base;
    };
    FrozenBase base1 = make_base(d.patch_m1);
    FrozenBase base2 = make_base(d.patch_m2);
    ModelConfig mcfg = config.model;
    mcfg.align_symmetric = true;
    CmptModel model = CmptModel::build(mcfg, true, std::move(base1), std::move(base2),
                                       d.n_classes, derive_seed(seed, kModelInitTag));

    auto make_raw = [&](int n) {
        std::vector<double> raw(static_cast<std::size_t>(n));
        for (double& v : raw) v = rng.normal();
        return raw;
    };
    Sample complete;
    complete.raw_m1 = make_raw(d.raw_dim_m1);
    complete.raw_m2 = make_raw(d.raw_dim_m2);
    complete.mask = PresenceMask{true, true};
    complete.target = LabelTarget::single(rng.uniform_int(d.n_classes));
    Sample m1_missing;
    m1_missing.raw_m1 = std::vector<double>(static_cast<std::size_t>(d.raw_dim_m1), 0.0);
    m1_missing.raw_m2 = make_raw(d.raw_dim_m2);
    m1_missing.mask = PresenceMask{false, true};
    m1_missing.target = LabelTarget::single(rng.uniform_int(d.n_classes));

    const Sample* samples[2] = {&complete, &m1_missing};
    const PresenceMask masks[2] = {complete.mask, m1_missing.mask};

    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        auto batch = model.batch_loss(g, std::span<const Sample* const>(samples, 2),
                                      std::span<const PresenceMask>(masks, 2),
                                      config.train.lambda, false, nullptr);
        if (with_grad) {
            g.backward(batch.node);
        }
        return g.scalar_value(batch.node);
    };
    return finite_difference_check(loss, model.trainable_tensors(), 1e-5);
}

} // namespace cmpt::pipeline
