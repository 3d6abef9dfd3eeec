#include "cmpt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cmpt {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "CMPTCKPT1\n";
constexpr int kVersion = 1;

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(const unsigned char* b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::vector<NamedTensor> base_named_tensors(FrozenBase& base) {
    std::vector<NamedTensor> out;
    out.push_back({"embed.projection", &base.embedder.projection});
    out.push_back({"embed.positional", &base.embedder.positional});
    out.push_back({"cls", &base.cls});
    for (std::size_t li = 0; li < base.encoder.layers.size(); ++li) {
        const std::string lp = "layer" + std::to_string(li) + ".";
        auto& l = base.encoder.layers[li];
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
    }
    out.push_back({"final_gain", &base.encoder.final_gain});
    out.push_back({"final_bias", &base.encoder.final_bias});
    return out;
}

} // namespace

json to_json(const ModelConfig& c) {
    return json{{"dim", c.dim},
                {"layers", c.layers},
                {"heads", c.heads},
                {"ff_dim", c.ff_dim},
                {"max_tokens", c.max_tokens},
                {"lora_rank", c.lora_rank},
                {"lora_alpha", c.lora_alpha},
                {"lora_dropout", c.lora_dropout},
                {"cmpt_init", c.cmpt_init},
                {"align_symmetric", c.align_symmetric},
                {"mask_cmpt_from_cls", c.mask_cmpt_from_cls}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.dim = j.at("dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_tokens = j.at("max_tokens").get<int>();
    c.lora_rank = j.at("lora_rank").get<int>();
    c.lora_alpha = j.at("lora_alpha").get<double>();
    c.lora_dropout = j.at("lora_dropout").get<double>();
    c.cmpt_init = j.at("cmpt_init").get<std::string>();
    c.align_symmetric = j.at("align_symmetric").get<bool>();
    c.mask_cmpt_from_cls = j.at("mask_cmpt_from_cls").get<bool>();
    return c;
}

void save_checkpoint(const std::string& path, const std::string& kind, const json& meta,
                     const std::vector<NamedTensor>& tensors) {
    json manifest;
    manifest["version"] = kVersion;
    manifest["kind"] = kind;
    manifest["meta"] = meta;
    json tlist = json::array();
    std::uint64_t offset = 0;
    for (const auto& nt : tensors) {
        tlist.push_back(json{{"name", nt.name},
                             {"rows", nt.tensor->rows},
                             {"cols", nt.tensor->cols},
                             {"offset", offset},
                             {"trainable", nt.tensor->requires_grad}});
        offset += nt.tensor->size() * 8;
    }
    manifest["tensors"] = tlist;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write checkpoint: " + path);
    }
    const std::string mtext = manifest.dump();
    out.write(kMagic, sizeof(kMagic) - 1);
    write_u64_le(out, mtext.size());
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& nt : tensors) {
        for (double d : nt.tensor->data) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, sizeof(bits));
            write_u64_le(out, bits);
        }
    }
    if (!out) {
        throw DataError("failed while writing checkpoint: " + path);
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path);
    }
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    unsigned char lenb[8];
    in.read(reinterpret_cast<char*>(lenb), 8);
    if (!in) {
        throw DataError("checkpoint header truncated: " + path);
    }
    const std::uint64_t msize = read_u64_le(lenb);
    std::string mtext(msize, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(msize));
    if (!in) {
        throw DataError("checkpoint manifest truncated: " + path);
    }
    json manifest = json::parse(mtext, nullptr, false);
    if (manifest.is_discarded()) {
        throw DataError("checkpoint manifest is not valid JSON: " + path);
    }
    if (manifest.at("version").get<int>() != kVersion) {
        throw DataError("unsupported checkpoint version in " + path);
    }

    std::vector<unsigned char> payload(std::istreambuf_iterator<char>(in), {});

    LoadedCheckpoint ckpt;
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.meta = manifest.at("meta");
    for (const auto& tj : manifest.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        Tensor2D t(tj.at("rows").get<int>(), tj.at("cols").get<int>());
        const std::uint64_t offset = tj.at("offset").get<std::uint64_t>();
        if (offset + t.size() * 8 > payload.size()) {
            throw DataError("checkpoint payload truncated for tensor '" + name + "' in " + path);
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            const std::uint64_t bits = read_u64_le(payload.data() + offset + i * 8);
            std::memcpy(&t.data[i], &bits, sizeof(bits));
        }
        ckpt.trainable_tags[name] = tj.at("trainable").get<bool>();
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

void save_bases(const std::string& path, FrozenBase& base, const json& meta) {
    json full = meta;
    full["dim"] = base.encoder.dim;
    full["heads"] = base.encoder.heads;
    full["ff_dim"] = base.encoder.ff_dim;
    full["layers"] = base.encoder.layers.size();
    full["patch_size"] = base.embedder.patch_size;
    full["max_tokens"] = base.embedder.positional.rows;
    save_checkpoint(path, "bases", full, base_named_tensors(base));
}

FrozenBase load_bases(const std::string& path) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "bases") {
        throw DataError("expected a bases checkpoint: " + path);
    }
    const int dim = ckpt.meta.at("dim").get<int>();
    FrozenBase base;
    base.embedder.patch_size = ckpt.meta.at("patch_size").get<int>();
    base.embedder.projection = Tensor2D(base.embedder.patch_size, dim);
    base.embedder.positional = Tensor2D(ckpt.meta.at("max_tokens").get<int>(), dim);
    base.cls = Tensor2D(1, dim);
    base.encoder.dim = dim;
    base.encoder.heads = ckpt.meta.at("heads").get<int>();
    base.encoder.ff_dim = ckpt.meta.at("ff_dim").get<int>();
    base.encoder.layers.resize(ckpt.meta.at("layers").get<std::size_t>());
    for (auto& l : base.encoder.layers) {
        l.w_q = Tensor2D(dim, dim);
        l.w_k = Tensor2D(dim, dim);
        l.w_v = Tensor2D(dim, dim);
        l.w_o = Tensor2D(dim, dim);
        l.w_ff1 = Tensor2D(dim, base.encoder.ff_dim);
        l.w_ff2 = Tensor2D(base.encoder.ff_dim, dim);
        l.ln1_gain = Tensor2D(1, dim);
        l.ln1_bias = Tensor2D(1, dim);
        l.ln2_gain = Tensor2D(1, dim);
        l.ln2_bias = Tensor2D(1, dim);
    }
    base.encoder.final_gain = Tensor2D(1, dim);
    base.encoder.final_bias = Tensor2D(1, dim);

    auto tensors = base_named_tensors(base);
    if (tensors.size() != ckpt.tensors.size()) {
        throw DataError("bases checkpoint tensor set mismatch: " + path);
    }
    for (auto& nt : tensors) {
        auto it = ckpt.tensors.find(nt.name);
        if (it == ckpt.tensors.end()) {
            throw DataError("bases checkpoint missing tensor '" + nt.name + "': " + path);
        }
        if (!it->second.same_shape(*nt.tensor)) {
            throw DataError("bases checkpoint shape mismatch for '" + nt.name + "': " + path);
        }
        nt.tensor->data = std::move(it->second.data);
    }
    base.set_trainable(false);
    return base;
}

void save_model(const std::string& path, CmptModel& model, const json& extra_meta) {
    json meta = extra_meta;
    meta["model_config"] = to_json(model.cfg);
    meta["use_cmpt"] = model.use_cmpt;
    meta["n_classes"] = model.n_classes;
    meta["patch_m1"] = model.patch_sizes[0];
    meta["patch_m2"] = model.patch_sizes[1];
    save_checkpoint(path, "model", meta, model.named_tensors());
}

CmptModel load_model(const std::string& path) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "model") {
        throw DataError("expected a model checkpoint: " + path);
    }
    ModelConfig cfg = model_config_from_json(ckpt.meta.at("model_config"));
    CmptModel model = CmptModel::empty(cfg, ckpt.meta.at("use_cmpt").get<bool>(),
                                       ckpt.meta.at("n_classes").get<int>(),
                                       ckpt.meta.at("patch_m1").get<int>(),
                                       ckpt.meta.at("patch_m2").get<int>());
    auto tensors = model.named_tensors();
    if (tensors.size() != ckpt.tensors.size()) {
        throw DataError("model checkpoint tensor set mismatch: " + path);
    }
    for (auto& nt : tensors) {
        auto it = ckpt.tensors.find(nt.name);
        if (it == ckpt.tensors.end()) {
            throw DataError("model checkpoint missing tensor '" + nt.name + "': " + path);
        }
        if (!it->second.same_shape(*nt.tensor)) {
            throw DataError("model checkpoint shape mismatch for '" + nt.name + "': " + path);
        }
        nt.tensor->data = std::move(it->second.data);
        nt.tensor->requires_grad = ckpt.trainable_tags.at(nt.name);
    }
    return model;
}

} // namespace cmpt
