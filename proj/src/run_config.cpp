#include "cmpt/run_config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "cmpt/checkpoint.hpp"

namespace cmpt {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError("config: '" + where + "' must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("config: unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_train_section(const json& j, TrainConfig& cfg, const std::string& where,
                        bool with_cmpt_fields) {
    std::vector<std::string> allowed = {"lr",           "epochs",     "warmup_epochs",
                                        "warmup_factor", "poly_power", "weight_decay",
                                        "adam_eps",     "betas",      "batch_size",
                                        "grad_clip"};
    if (with_cmpt_fields) {
        allowed.insert(allowed.end(), {"lambda", "dropout_probs", "mode"});
    }
    check_keys(j, allowed, where);
    read_if(j, "lr", cfg.lr);
    read_if(j, "epochs", cfg.epochs);
    read_if(j, "warmup_epochs", cfg.warmup_epochs);
    read_if(j, "warmup_factor", cfg.warmup_factor);
    read_if(j, "poly_power", cfg.poly_power);
    read_if(j, "weight_decay", cfg.weight_decay);
    read_if(j, "adam_eps", cfg.adam_eps);
    if (j.contains("betas")) {
        auto b = j.at("betas").get<std::vector<double>>();
        if (b.size() != 2) throw ConfigError("config: betas needs two values in " + where);
        cfg.betas = {b[0], b[1]};
    }
    read_if(j, "batch_size", cfg.batch_size);
    read_if(j, "grad_clip", cfg.grad_clip);
    if (with_cmpt_fields) {
        read_if(j, "lambda", cfg.lambda);
        if (j.contains("dropout_probs")) {
            auto p = j.at("dropout_probs").get<std::vector<double>>();
            if (p.size() != 3) {
                throw ConfigError("config: dropout_probs needs three values in " + where);
            }
            cfg.dropout_probs = {p[0], p[1], p[2]};
        }
        if (j.contains("mode")) {
            cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
        }
    }
}

json train_section_to_json(const TrainConfig& cfg, bool with_cmpt_fields) {
    json j{{"lr", cfg.lr},
           {"epochs", cfg.epochs},
           {"warmup_epochs", cfg.warmup_epochs},
           {"warmup_factor", cfg.warmup_factor},
           {"poly_power", cfg.poly_power},
           {"weight_decay", cfg.weight_decay},
           {"adam_eps", cfg.adam_eps},
           {"betas", std::vector<double>{cfg.betas[0], cfg.betas[1]}},
           {"batch_size", cfg.batch_size},
           {"grad_clip", cfg.grad_clip}};
    if (with_cmpt_fields) {
        j["lambda"] = cfg.lambda;
        j["dropout_probs"] =
            std::vector<double>{cfg.dropout_probs[0], cfg.dropout_probs[1], cfg.dropout_probs[2]};
        j["mode"] = to_string(cfg.mode);
    }
    return j;
}

// Parses an override value as a JSON literal, falling back to a string.
json parse_override_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);
    return v;
}

void apply_override(json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like section.key=value: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    json* at = &doc;
    std::size_t begin = 0;
    while (true) {
        auto dot = path.find('.', begin);
        const std::string part = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (part.empty()) {
            throw ConfigError("override path has an empty segment: " + assignment);
        }
        if (dot == std::string::npos) {
            (*at)[part] = parse_override_value(assignment.substr(eq + 1));
            break;
        }
        at = &((*at)[part]);
        begin = dot + 1;
    }
}

} // namespace

RunConfig::RunConfig() {
    pretrain.epochs = 10;
    pretrain.warmup_epochs = 2;
}

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j, {"seed", "dataset", "model", "pretrain", "train", "protocols", "sweep",
                   "ablation", "paths"},
               "top level");
    RunConfig cfg;
    read_if(j, "seed", cfg.seed);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d,
                   {"n_classes", "latent_dim", "raw_dim_m1", "raw_dim_m2", "patch_m1", "patch_m2",
                    "noise_m1", "noise_m2", "redundancy", "exclusive_m1", "exclusive_m2",
                    "label_mode", "train_size", "val_size", "test_size"},
                   "dataset");
        read_if(d, "n_classes", cfg.dataset.n_classes);
        read_if(d, "latent_dim", cfg.dataset.latent_dim);
        read_if(d, "raw_dim_m1", cfg.dataset.raw_dim_m1);
        read_if(d, "raw_dim_m2", cfg.dataset.raw_dim_m2);
        read_if(d, "patch_m1", cfg.dataset.patch_m1);
        read_if(d, "patch_m2", cfg.dataset.patch_m2);
        read_if(d, "noise_m1", cfg.dataset.noise_m1);
        read_if(d, "noise_m2", cfg.dataset.noise_m2);
        read_if(d, "redundancy", cfg.dataset.redundancy);
        read_if(d, "exclusive_m1", cfg.dataset.exclusive_m1);
        read_if(d, "exclusive_m2", cfg.dataset.exclusive_m2);
        read_if(d, "label_mode", cfg.dataset.label_mode);
        read_if(d, "train_size", cfg.dataset.train_size);
        read_if(d, "val_size", cfg.dataset.val_size);
        read_if(d, "test_size", cfg.dataset.test_size);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m,
                   {"dim", "layers", "heads", "ff_dim", "max_tokens", "lora_rank", "lora_alpha",
                    "lora_dropout", "cmpt_init", "align_symmetric", "mask_cmpt_from_cls"},
                   "model");
        read_if(m, "dim", cfg.model.dim);
        read_if(m, "layers", cfg.model.layers);
        read_if(m, "heads", cfg.model.heads);
        read_if(m, "ff_dim", cfg.model.ff_dim);
        read_if(m, "max_tokens", cfg.model.max_tokens);
        read_if(m, "lora_rank", cfg.model.lora_rank);
        read_if(m, "lora_alpha", cfg.model.lora_alpha);
        read_if(m, "lora_dropout", cfg.model.lora_dropout);
        read_if(m, "cmpt_init", cfg.model.cmpt_init);
        read_if(m, "align_symmetric", cfg.model.align_symmetric);
        read_if(m, "mask_cmpt_from_cls", cfg.model.mask_cmpt_from_cls);
    }

    if (j.contains("pretrain")) {
        read_train_section(j.at("pretrain"), cfg.pretrain, "pretrain", false);
    }
    if (j.contains("train")) {
        read_train_section(j.at("train"), cfg.train, "train", true);
    }

    if (j.contains("protocols")) {
        const json& p = j.at("protocols");
        check_keys(p, {"train", "eval"}, "protocols");
        read_if(p, "train", cfg.protocol_train);
        read_if(p, "eval", cfg.protocol_eval);
    }
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        check_keys(s, {"points"}, "sweep");
        read_if(s, "points", cfg.sweep_points);
    }
    if (j.contains("ablation")) {
        const json& a = j.at("ablation");
        check_keys(a, {"axis", "values"}, "ablation");
        read_if(a, "axis", cfg.ablation_axis);
        read_if(a, "values", cfg.ablation_values);
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        check_keys(p, {"data", "bases_dir", "model", "train_log", "report"}, "paths");
        read_if(p, "data", cfg.paths.data);
        read_if(p, "bases_dir", cfg.paths.bases_dir);
        read_if(p, "model", cfg.paths.model);
        read_if(p, "train_log", cfg.paths.train_log);
        read_if(p, "report", cfg.paths.report);
    }

    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("config file is not valid JSON: " + path);
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    return from_json(doc);
}

json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["dataset"] = json{{"n_classes", dataset.n_classes},
                        {"latent_dim", dataset.latent_dim},
                        {"raw_dim_m1", dataset.raw_dim_m1},
                        {"raw_dim_m2", dataset.raw_dim_m2},
                        {"patch_m1", dataset.patch_m1},
                        {"patch_m2", dataset.patch_m2},
                        {"noise_m1", dataset.noise_m1},
                        {"noise_m2", dataset.noise_m2},
                        {"redundancy", dataset.redundancy},
                        {"exclusive_m1", dataset.exclusive_m1},
                        {"exclusive_m2", dataset.exclusive_m2},
                        {"label_mode", dataset.label_mode},
                        {"train_size", dataset.train_size},
                        {"val_size", dataset.val_size},
                        {"test_size", dataset.test_size}};
    j["model"] = cmpt::to_json(model);
    j["pretrain"] = train_section_to_json(pretrain, false);
    j["train"] = train_section_to_json(train, true);
    j["protocols"] = json{{"train", protocol_train}, {"eval", protocol_eval}};
    j["sweep"] = json{{"points", sweep_points}};
    j["ablation"] = json{{"axis", ablation_axis}, {"values", ablation_values}};
    j["paths"] = json{{"data", paths.data},
                      {"bases_dir", paths.bases_dir},
                      {"model", paths.model},
                      {"train_log", paths.train_log},
                      {"report", paths.report}};
    return j;
}

void RunConfig::validate() const {
    dataset.validate();
    model.validate();
    pretrain.validate();
    train.validate();
    MissingProtocol::parse(protocol_train);
    MissingProtocol::parse(protocol_eval);
    for (double x : sweep_points) {
        if (x < 0.0 || x > 100.0) {
            throw ConfigError("config: sweep points must lie in [0, 100]");
        }
    }
    if (ablation_axis != "lambda" && ablation_axis != "rank" && ablation_axis != "mode") {
        throw ConfigError("config: ablation.axis must be lambda, rank or mode");
    }
    if (ablation_values.empty()) {
        throw ConfigError("config: ablation.values must not be empty");
    }
    const int content_m1 = dataset.raw_dim_m1 / dataset.patch_m1;
    const int content_m2 = dataset.raw_dim_m2 / dataset.patch_m2;
    if (content_m1 > model.max_tokens || content_m2 > model.max_tokens) {
        throw ConfigError("config: content token count exceeds model.max_tokens");
    }
}

void RunConfig::rebase_outputs(const std::string& dir) {
    namespace fs = std::filesystem;
    auto rebase = [&](std::string& path) {
        path = (fs::path(dir) / fs::path(path).filename()).string();
    };
    rebase(paths.data);
    paths.bases_dir = dir;
    rebase(paths.model);
    rebase(paths.train_log);
    rebase(paths.report);
}

} // namespace cmpt
