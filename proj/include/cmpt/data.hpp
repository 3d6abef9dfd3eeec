#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmpt/fusion.hpp"
#include "cmpt/objectives.hpp"
#include "cmpt/rng.hpp"

namespace cmpt {

// Two-modality synthetic classification task. Class signal is split into a
// shared latent component (weight sqrt(redundancy)) and per-modality
// exclusive components; the first `exclusive_m1` classes carry signal only
// in modality 1 (their modality-2 signal is copied from a designated
// confuser class), and symmetrically for `exclusive_m2`.
struct DatasetConfig {
    int n_classes = 10;
    int latent_dim = 16;
    int raw_dim_m1 = 64;
    int raw_dim_m2 = 64;
    int patch_m1 = 8;
    int patch_m2 = 8;
    double noise_m1 = 0.5;
    double noise_m2 = 0.5;
    double redundancy = 0.6; // fraction of class signal shared across modalities
    int exclusive_m1 = 2;
    int exclusive_m2 = 2;
    std::string label_mode = "single"; // "single" | "multi"
    int train_size = 2000;
    int val_size = 400;
    int test_size = 400;
    std::uint64_t seed = 1;

    void validate() const;
    LabelTarget::Mode mode() const;
};

struct Sample {
    std::vector<double> raw_m1; // zero placeholder when mask.m1_present is false
    std::vector<double> raw_m2;
    PresenceMask mask;
    LabelTarget target;
};

struct SplitStats {
    int n_complete = 0;
    int n_m1_only = 0;
    int n_m2_only = 0;
    int total() const { return n_complete + n_m1_only + n_m2_only; }
};

struct Split {
    std::vector<Sample> samples;
    SplitStats stats;
};

struct Dataset {
    DatasetConfig config;
    Split train, val, test;
};

enum class ProtocolKind { kComplete, kRatioPair, kInferenceOnly, kEtaSplit, kSweepPoint };

struct MissingProtocol {
    ProtocolKind kind = ProtocolKind::kComplete;
    double avail_m1 = 100.0; // ratio_pair / sweep_point availability percentages
    double avail_m2 = 100.0;
    double eta = 0.0;       // eta_split missing rate
    int drop_modality = 0;  // inference_only: 1 or 2

    // "complete" | "ratio:A1,A2" | "inference_only:m1|m2" | "eta:E" | "sweep:X"
    static MissingProtocol parse(const std::string& text);
    std::string to_string() const;
    void validate() const;
};

// floor(percent * n / 100 + 0.5)
int round_half_up_count(double percent, int n);

Dataset generate(const DatasetConfig& config);

// Masks the split in place (zero placeholders, mask flags) and returns the
// realized subset counts. Seed-deterministic; throws DataError when the
// requested ratios would force a sample to lose both modalities.
SplitStats apply_protocol(Split& split, const MissingProtocol& protocol, std::uint64_t seed);

// Seed-deterministic shuffled index batches covering the split exactly once;
// the final partial batch is kept.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// Per-class noise-free signal vectors (what the generator emits at sigma=0);
// used by evaluation tooling and test oracles.
struct ClassPrototypes {
    std::vector<std::vector<double>> m1; // [class][raw_dim_m1]
    std::vector<std::vector<double>> m2;
};
ClassPrototypes class_prototypes(const DatasetConfig& config);

} // namespace cmpt
