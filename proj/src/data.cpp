#include "cmpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "cmpt/errors.hpp"

namespace cmpt {

namespace {

using nlohmann::json;

// stream tags for seed derivation
constexpr std::uint64_t kClassesTag = 0x636c6173;
constexpr std::uint64_t kMapsTag = 0x6d617073;
constexpr std::uint64_t kSampleTag = 0x73616d70;

struct ClassSignals {
    // latent-space class signal per modality, exclusive classes already
    // overwritten with their confuser's signal
    std::vector<std::vector<double>> u1, u2;
};

std::vector<double> gaussian_vec(int n, Rng& rng, double sigma = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = rng.normal(0.0, sigma);
    return v;
}

int confuser_of(int exclusive_index, int offset, int first_regular, int n_regular) {
    return first_regular + (exclusive_index + offset) % n_regular;
}

ClassSignals class_signals(const DatasetConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, kClassesTag));
    const double w_shared = std::sqrt(cfg.redundancy);
    const double w_excl = std::sqrt(1.0 - cfg.redundancy);

    ClassSignals s;
    s.u1.resize(static_cast<std::size_t>(cfg.n_classes));
    s.u2.resize(static_cast<std::size_t>(cfg.n_classes));
    for (int k = 0; k < cfg.n_classes; ++k) {
        auto z = gaussian_vec(cfg.latent_dim, rng);
        auto e1 = gaussian_vec(cfg.latent_dim, rng);
        auto e2 = gaussian_vec(cfg.latent_dim, rng);
        auto& u1 = s.u1[static_cast<std::size_t>(k)];
        auto& u2 = s.u2[static_cast<std::size_t>(k)];
        u1.resize(static_cast<std::size_t>(cfg.latent_dim));
        u2.resize(static_cast<std::size_t>(cfg.latent_dim));
        for (int i = 0; i < cfg.latent_dim; ++i) {
            u1[static_cast<std::size_t>(i)] = w_shared * z[static_cast<std::size_t>(i)] +
                                              w_excl * e1[static_cast<std::size_t>(i)];
            u2[static_cast<std::size_t>(i)] = w_shared * z[static_cast<std::size_t>(i)] +
                                              w_excl * e2[static_cast<std::size_t>(i)];
        }
    }
    // Exclusive classes masquerade as a regular confuser class in the
    // modality that carries none of their signal.
    const int first_regular = cfg.exclusive_m1 + cfg.exclusive_m2;
    const int n_regular = cfg.n_classes - first_regular;
    for (int i = 0; i < cfg.exclusive_m1; ++i) {
        s.u2[static_cast<std::size_t>(i)] =
            s.u2[static_cast<std::size_t>(confuser_of(i, 0, first_regular, n_regular))];
    }
    for (int j = 0; j < cfg.exclusive_m2; ++j) {
        s.u1[static_cast<std::size_t>(cfg.exclusive_m1 + j)] =
            s.u1[static_cast<std::size_t>(confuser_of(j, cfg.exclusive_m1, first_regular, n_regular))];
    }
    return s;
}

struct MixingMaps {
    Tensor2D a1; // raw_dim_m1 x latent
    Tensor2D a2;
};

MixingMaps mixing_maps(const DatasetConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, kMapsTag));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    MixingMaps m;
    m.a1 = Tensor2D(cfg.raw_dim_m1, cfg.latent_dim);
    for (double& v : m.a1.data) v = rng.normal(0.0, scale);
    m.a2 = Tensor2D(cfg.raw_dim_m2, cfg.latent_dim);
    for (double& v : m.a2.data) v = rng.normal(0.0, scale);
    return m;
}

std::vector<double> mix(const Tensor2D& map, const std::vector<double>& latent) {
    std::vector<double> out(static_cast<std::size_t>(map.rows), 0.0);
    for (int r = 0; r < map.rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < map.cols; ++c) acc += map.at(r, c) * latent[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

Split generate_split(const DatasetConfig& cfg, const ClassSignals& signals,
                     const MixingMaps& maps, int split_id, int size) {
    Split split;
    split.samples.resize(static_cast<std::size_t>(size));
    const bool multi = cfg.mode() == LabelTarget::Mode::kMulti;
    for (int i = 0; i < size; ++i) {
        Rng rng(derive_seed(cfg.seed, kSampleTag, static_cast<std::uint64_t>(split_id),
                            static_cast<std::uint64_t>(i)));
        Sample& s = split.samples[static_cast<std::size_t>(i)];

        std::vector<double> latent1(static_cast<std::size_t>(cfg.latent_dim), 0.0);
        std::vector<double> latent2(static_cast<std::size_t>(cfg.latent_dim), 0.0);
        if (multi) {
            int count = 1 + rng.uniform_int(3);
            std::vector<std::uint8_t> bits(static_cast<std::size_t>(cfg.n_classes), 0);
            for (int picked = 0; picked < count;) {
                int k = rng.uniform_int(cfg.n_classes);
                if (bits[static_cast<std::size_t>(k)]) continue;
                bits[static_cast<std::size_t>(k)] = 1;
                for (int d = 0; d < cfg.latent_dim; ++d) {
                    latent1[static_cast<std::size_t>(d)] += signals.u1[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
                    latent2[static_cast<std::size_t>(d)] += signals.u2[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
                }
                ++picked;
            }
            s.target = LabelTarget::multi(std::move(bits));
        } else {
            int k = rng.uniform_int(cfg.n_classes);
            latent1 = signals.u1[static_cast<std::size_t>(k)];
            latent2 = signals.u2[static_cast<std::size_t>(k)];
            s.target = LabelTarget::single(k);
        }

        s.raw_m1 = mix(maps.a1, latent1);
        for (double& v : s.raw_m1) v += cfg.noise_m1 * rng.normal();
        s.raw_m2 = mix(maps.a2, latent2);
        for (double& v : s.raw_m2) v += cfg.noise_m2 * rng.normal();
        s.mask = PresenceMask{true, true};
    }
    split.stats = SplitStats{size, 0, 0};
    return split;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles_le(std::ostream& out, const std::vector<double>& values) {
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        write_u64_le(out, bits);
    }
}

std::vector<double> read_doubles_le(std::istream& in, std::size_t count) {
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = read_u64_le(in);
        std::memcpy(&values[i], &bits, sizeof(bits));
    }
    if (!in) {
        throw DataError("dataset payload truncated");
    }
    return values;
}

json config_to_json(const DatasetConfig& c) {
    return json{{"n_classes", c.n_classes},
                {"latent_dim", c.latent_dim},
                {"raw_dim_m1", c.raw_dim_m1},
                {"raw_dim_m2", c.raw_dim_m2},
                {"patch_m1", c.patch_m1},
                {"patch_m2", c.patch_m2},
                {"noise_m1", c.noise_m1},
                {"noise_m2", c.noise_m2},
                {"redundancy", c.redundancy},
                {"exclusive_m1", c.exclusive_m1},
                {"exclusive_m2", c.exclusive_m2},
                {"label_mode", c.label_mode},
                {"train_size", c.train_size},
                {"val_size", c.val_size},
                {"test_size", c.test_size},
                {"seed", c.seed}};
}

DatasetConfig config_from_json(const json& j) {
    DatasetConfig c;
    c.n_classes = j.at("n_classes").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.raw_dim_m1 = j.at("raw_dim_m1").get<int>();
    c.raw_dim_m2 = j.at("raw_dim_m2").get<int>();
    c.patch_m1 = j.at("patch_m1").get<int>();
    c.patch_m2 = j.at("patch_m2").get<int>();
    c.noise_m1 = j.at("noise_m1").get<double>();
    c.noise_m2 = j.at("noise_m2").get<double>();
    c.redundancy = j.at("redundancy").get<double>();
    c.exclusive_m1 = j.at("exclusive_m1").get<int>();
    c.exclusive_m2 = j.at("exclusive_m2").get<int>();
    c.label_mode = j.at("label_mode").get<std::string>();
    c.train_size = j.at("train_size").get<int>();
    c.val_size = j.at("val_size").get<int>();
    c.test_size = j.at("test_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json stats_to_json(const SplitStats& s) {
    return json{{"n_complete", s.n_complete}, {"n_m1_only", s.n_m1_only}, {"n_m2_only", s.n_m2_only}};
}

SplitStats stats_from_json(const json& j) {
    SplitStats s;
    s.n_complete = j.at("n_complete").get<int>();
    s.n_m1_only = j.at("n_m1_only").get<int>();
    s.n_m2_only = j.at("n_m2_only").get<int>();
    return s;
}

constexpr char kMagic[] = "CMPTDATA1\n";

} // namespace

void DatasetConfig::validate() const {
    if (n_classes < 2) throw ConfigError("dataset: n_classes must be at least 2");
    if (latent_dim < 1) throw ConfigError("dataset: latent_dim must be positive");
    if (raw_dim_m1 < 1 || raw_dim_m2 < 1) throw ConfigError("dataset: raw dims must be positive");
    if (patch_m1 < 1 || raw_dim_m1 % patch_m1 != 0) {
        throw ConfigError("dataset: raw_dim_m1 must be divisible by patch_m1");
    }
    if (patch_m2 < 1 || raw_dim_m2 % patch_m2 != 0) {
        throw ConfigError("dataset: raw_dim_m2 must be divisible by patch_m2");
    }
    if (noise_m1 < 0.0 || noise_m2 < 0.0) throw ConfigError("dataset: noise must be non-negative");
    if (redundancy < 0.0 || redundancy > 1.0) {
        throw ConfigError("dataset: redundancy must lie in [0, 1]");
    }
    if (exclusive_m1 < 0 || exclusive_m2 < 0) {
        throw ConfigError("dataset: exclusive class counts must be non-negative");
    }
    if (exclusive_m1 + exclusive_m2 >= n_classes && exclusive_m1 + exclusive_m2 > 0) {
        throw ConfigError("dataset: at least one regular class needed as confuser");
    }
    if (label_mode != "single" && label_mode != "multi") {
        throw ConfigError("dataset: label_mode must be 'single' or 'multi'");
    }
    if (label_mode == "multi" && n_classes < 3) {
        throw ConfigError("dataset: multi-label mode draws up to 3 classes");
    }
    if (train_size < 1 || val_size < 0 || test_size < 1) {
        throw ConfigError("dataset: split sizes invalid");
    }
}

LabelTarget::Mode DatasetConfig::mode() const {
    return label_mode == "multi" ? LabelTarget::Mode::kMulti : LabelTarget::Mode::kSingle;
}

int round_half_up_count(double percent, int n) {
    return static_cast<int>(std::floor(percent * n / 100.0 + 0.5));
}

Dataset generate(const DatasetConfig& config) {
    config.validate();
    const ClassSignals signals = class_signals(config);
    const MixingMaps maps = mixing_maps(config);
    Dataset d;
    d.config = config;
    d.train = generate_split(config, signals, maps, 0, config.train_size);
    d.val = generate_split(config, signals, maps, 1, config.val_size);
    d.test = generate_split(config, signals, maps, 2, config.test_size);
    return d;
}

ClassPrototypes class_prototypes(const DatasetConfig& config) {
    config.validate();
    const ClassSignals signals = class_signals(config);
    const MixingMaps maps = mixing_maps(config);
    ClassPrototypes p;
    p.m1.reserve(static_cast<std::size_t>(config.n_classes));
    p.m2.reserve(static_cast<std::size_t>(config.n_classes));
    for (int k = 0; k < config.n_classes; ++k) {
        p.m1.push_back(mix(maps.a1, signals.u1[static_cast<std::size_t>(k)]));
        p.m2.push_back(mix(maps.a2, signals.u2[static_cast<std::size_t>(k)]));
    }
    return p;
}

MissingProtocol MissingProtocol::parse(const std::string& text) {
    MissingProtocol p;
    auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head == "complete") {
        p.kind = ProtocolKind::kComplete;
    } else if (head == "ratio") {
        auto comma = rest.find(',');
        if (comma == std::string::npos) {
            throw ConfigError("protocol: ratio needs two percentages, e.g. ratio:65,65");
        }
        p.kind = ProtocolKind::kRatioPair;
        p.avail_m1 = std::stod(rest.substr(0, comma));
        p.avail_m2 = std::stod(rest.substr(comma + 1));
    } else if (head == "inference_only") {
        p.kind = ProtocolKind::kInferenceOnly;
        if (rest == "m1") {
            p.drop_modality = 1;
        } else if (rest == "m2") {
            p.drop_modality = 2;
        } else {
            throw ConfigError("protocol: inference_only needs m1 or m2");
        }
    } else if (head == "eta") {
        p.kind = ProtocolKind::kEtaSplit;
        p.eta = std::stod(rest);
    } else if (head == "sweep") {
        p.kind = ProtocolKind::kSweepPoint;
        p.avail_m1 = 100.0;
        p.avail_m2 = std::stod(rest);
    } else {
        throw ConfigError("protocol: unknown kind '" + head + "'");
    }
    p.validate();
    return p;
}

std::string MissingProtocol::to_string() const {
    auto fmt = [](double v) {
        std::string s = std::to_string(v);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    switch (kind) {
    case ProtocolKind::kComplete:
        return "complete";
    case ProtocolKind::kRatioPair:
        return "ratio:" + fmt(avail_m1) + "," + fmt(avail_m2);
    case ProtocolKind::kInferenceOnly:
        return std::string("inference_only:m") + (drop_modality == 1 ? "1" : "2");
    case ProtocolKind::kEtaSplit:
        return "eta:" + fmt(eta);
    case ProtocolKind::kSweepPoint:
        return "sweep:" + fmt(avail_m2);
    }
    return "complete";
}

void MissingProtocol::validate() const {
    auto in_range = [](double v) { return v >= 0.0 && v <= 100.0; };
    switch (kind) {
    case ProtocolKind::kComplete:
        break;
    case ProtocolKind::kRatioPair:
    case ProtocolKind::kSweepPoint:
        if (!in_range(avail_m1) || !in_range(avail_m2)) {
            throw ConfigError("protocol: availability percentages must lie in [0, 100]");
        }
        if (avail_m1 <= 0.0 && avail_m2 <= 0.0) {
            throw ConfigError("protocol: at least one modality needs availability > 0");
        }
        break;
    case ProtocolKind::kInferenceOnly:
        if (drop_modality != 1 && drop_modality != 2) {
            throw ConfigError("protocol: inference_only requires a modality");
        }
        break;
    case ProtocolKind::kEtaSplit:
        if (!in_range(eta)) {
            throw ConfigError("protocol: eta must lie in [0, 100]");
        }
        break;
    }
}

SplitStats apply_protocol(Split& split, const MissingProtocol& protocol, std::uint64_t seed) {
    protocol.validate();
    const int n = static_cast<int>(split.samples.size());
    if (n == 0) {
        throw DataError("apply_protocol: empty split");
    }

    auto mask_out = [&](Sample& s, int modality) {
        if (modality == 1) {
            std::fill(s.raw_m1.begin(), s.raw_m1.end(), 0.0);
            s.mask.m1_present = false;
        } else {
            std::fill(s.raw_m2.begin(), s.raw_m2.end(), 0.0);
            s.mask.m2_present = false;
        }
    };

    SplitStats stats;
    switch (protocol.kind) {
    case ProtocolKind::kComplete: {
        stats = SplitStats{n, 0, 0};
        break;
    }
    case ProtocolKind::kRatioPair:
    case ProtocolKind::kSweepPoint: {
        const int k1 = round_half_up_count(protocol.avail_m1, n);
        const int k2 = round_half_up_count(protocol.avail_m2, n);
        if (k1 + k2 < n) {
            throw DataError("apply_protocol: availability " + protocol.to_string() +
                            " would force a sample to lose both modalities");
        }
        Rng rng(seed);
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        // order[0..c): complete, order[c..k1): m1-only, order[k1..n): m2-only
        const int c = k1 + k2 - n;
        for (int i = c; i < k1; ++i) mask_out(split.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], 2);
        for (int i = k1; i < n; ++i) mask_out(split.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], 1);
        stats = SplitStats{c, k1 - c, n - k1};
        break;
    }
    case ProtocolKind::kEtaSplit: {
        const int d = round_half_up_count(protocol.eta / 2.0, n);
        if (2 * d > n) {
            throw DataError("apply_protocol: eta too large for split size");
        }
        Rng rng(seed);
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (int i = 0; i < d; ++i) mask_out(split.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], 2);
        for (int i = d; i < 2 * d; ++i) mask_out(split.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], 1);
        stats = SplitStats{n - 2 * d, d, d};
        break;
    }
    case ProtocolKind::kInferenceOnly: {
        for (auto& s : split.samples) mask_out(s, protocol.drop_modality);
        stats = protocol.drop_modality == 2 ? SplitStats{0, n, 0} : SplitStats{0, 0, n};
        break;
    }
    }
    split.stats = stats;
    return stats;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng) {
    if (n < 1) {
        throw DataError("epoch_batches: empty split");
    }
    if (batch_size < 1) {
        throw DataError("epoch_batches: batch size must be positive");
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (int at = 0; at < n; at += batch_size) {
        const int end = std::min(n, at + batch_size);
        batches.emplace_back(order.begin() + at, order.begin() + end);
    }
    return batches;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    const DatasetConfig& cfg = dataset.config;
    const bool multi = cfg.mode() == LabelTarget::Mode::kMulti;
    const int label_width = multi ? cfg.n_classes : 1;

    json manifest;
    manifest["version"] = 1;
    manifest["config"] = config_to_json(cfg);
    json splits = json::array();
    std::uint64_t offset = 0;
    const Split* all[3] = {&dataset.train, &dataset.val, &dataset.test};
    const char* names[3] = {"train", "val", "test"};
    for (int si = 0; si < 3; ++si) {
        const int n = static_cast<int>(all[si]->samples.size());
        json js;
        js["name"] = names[si];
        js["n"] = n;
        js["stats"] = stats_to_json(all[si]->stats);
        js["offset"] = offset;
        // per sample: raw_m1, raw_m2, mask(2), labels(label_width), all doubles
        offset += static_cast<std::uint64_t>(n) *
                  static_cast<std::uint64_t>(cfg.raw_dim_m1 + cfg.raw_dim_m2 + 2 + label_width) * 8;
        splits.push_back(js);
    }
    manifest["splits"] = splits;
    manifest["label_width"] = label_width;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write dataset file: " + path);
    }
    const std::string mtext = manifest.dump();
    out.write(kMagic, sizeof(kMagic) - 1);
    write_u64_le(out, mtext.size());
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const Split* split : all) {
        for (const Sample& s : split->samples) {
            write_doubles_le(out, s.raw_m1);
            write_doubles_le(out, s.raw_m2);
            write_doubles_le(out, {s.mask.m1_present ? 1.0 : 0.0, s.mask.m2_present ? 1.0 : 0.0});
            if (multi) {
                std::vector<double> bits(static_cast<std::size_t>(label_width));
                for (int c = 0; c < label_width; ++c) {
                    bits[static_cast<std::size_t>(c)] = s.target.labels[static_cast<std::size_t>(c)];
                }
                write_doubles_le(out, bits);
            } else {
                write_doubles_le(out, {static_cast<double>(s.target.index)});
            }
        }
    }
    if (!out) {
        throw DataError("failed while writing dataset file: " + path);
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset file: " + path);
    }
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw DataError("not a dataset file: " + path);
    }
    const std::uint64_t msize = read_u64_le(in);
    std::string mtext(msize, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(msize));
    if (!in) {
        throw DataError("dataset manifest truncated: " + path);
    }
    json manifest = json::parse(mtext, nullptr, false);
    if (manifest.is_discarded()) {
        throw DataError("dataset manifest is not valid JSON: " + path);
    }
    if (manifest.at("version").get<int>() != 1) {
        throw DataError("unsupported dataset version in " + path);
    }

    Dataset d;
    d.config = config_from_json(manifest.at("config"));
    const bool multi = d.config.mode() == LabelTarget::Mode::kMulti;
    const int label_width = manifest.at("label_width").get<int>();

    Split* all[3] = {&d.train, &d.val, &d.test};
    for (int si = 0; si < 3; ++si) {
        const json& js = manifest.at("splits").at(si);
        const int n = js.at("n").get<int>();
        Split& split = *all[si];
        split.stats = stats_from_json(js.at("stats"));
        split.samples.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Sample& s = split.samples[static_cast<std::size_t>(i)];
            s.raw_m1 = read_doubles_le(in, static_cast<std::size_t>(d.config.raw_dim_m1));
            s.raw_m2 = read_doubles_le(in, static_cast<std::size_t>(d.config.raw_dim_m2));
            auto mask = read_doubles_le(in, 2);
            s.mask = PresenceMask{mask[0] != 0.0, mask[1] != 0.0};
            auto label = read_doubles_le(in, static_cast<std::size_t>(label_width));
            if (multi) {
                std::vector<std::uint8_t> bits(static_cast<std::size_t>(label_width));
                for (int c = 0; c < label_width; ++c) {
                    bits[static_cast<std::size_t>(c)] = label[static_cast<std::size_t>(c)] != 0.0;
                }
                s.target = LabelTarget::multi(std::move(bits));
            } else {
                s.target = LabelTarget::single(static_cast<int>(label[0]));
            }
        }
    }
    return d;
}

} // namespace cmpt
