#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cmpt/model.hpp"

namespace cmpt {

enum class TrainMode { kBaseline, kDropoutOnly, kCmpt };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode mode);

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 30;
    int warmup_epochs = 5;
    double warmup_factor = 0.1;
    double poly_power = 0.9;
    double weight_decay = 0.02;
    double adam_eps = 1e-8;
    std::array<double, 2> betas{0.9, 0.999};
    double lambda = 0.2;
    // (keep both, drop modality 1, drop modality 2) for complete samples
    std::array<double, 3> dropout_probs{0.5, 0.25, 0.25};
    int batch_size = 32;
    double grad_clip = 0.0; // 0 disables
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::kCmpt;

    void validate() const;
};

// Warmup then polynomial decay at per-epoch granularity. step_frac in [0,1)
// allows finer-grained schedules; the training loop passes 0.
double poly_lr(int epoch, double step_frac, const TrainConfig& config);

struct AdamWState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m, v;

    void init(const std::vector<Tensor2D*>& params);
};

// Decoupled weight decay; frozen tensors are never touched because only the
// trainable list is passed in.
void adamw_step(const std::vector<Tensor2D*>& params, AdamWState& state, double lr_t,
                const TrainConfig& config);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double task = 0.0;
    double align = 0.0;
    double total = 0.0;
    long n_complete_seen = 0;
};

struct PretrainReport {
    double test_accuracy = 0.0; // throwaway head, unimodal test view
};

// Trains a fresh encoder plus a throwaway head on the single-modality view
// of the train split, then freezes everything that survives.
FrozenBase pretrain_unimodal(int modality, const Dataset& dataset, const ModelConfig& model_cfg,
                             const TrainConfig& config, PretrainReport* report = nullptr);

// Proxy-token stage over a (possibly pre-masked) train split. Complete
// samples always run through both encoders so the alignment term trains
// every iteration; the sampled dropout outcome only steers the task path.
std::vector<EpochLog> train_model(CmptModel& model, const Split& train_split,
                                  const TrainConfig& config);

} // namespace cmpt
