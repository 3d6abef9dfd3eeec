#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cmpt/checkpoint.hpp"
#include "cmpt/train.hpp"

namespace cmpt {

struct Metrics {
    double accuracy = 0.0; // multi-label mode: exact-match accuracy
    double f1_macro = 0.0;
    double f1_micro = 0.0;
    std::vector<double> per_class_f1;
    std::vector<int> support;
    std::string protocol;
};

// Single mode: argmax decision. Multi mode: sigmoid >= 0.5 per slot.
// Per-class precision/recall/F1 use the 0/0 -> 0 convention; macro is the
// unweighted class mean, micro comes from global TP/FP/FN counts.
Metrics compute_metrics(const std::vector<std::vector<double>>& logits,
                        const std::vector<LabelTarget>& targets);

// Applies the protocol to a copy of the split (seed-deterministic), runs
// gate-aware inference and scores the predictions. Read-only on the model.
Metrics evaluate(CmptModel& model, const Split& test_split, const MissingProtocol& protocol,
                 std::uint64_t eval_seed);

struct SweepPoint {
    double x = 0.0; // modality-2 availability percentage
    Metrics metrics;
};

// One evaluation per (100%, x%) availability point, rows ordered by x
// descending. Points are re-masked with seeds derived from (eval_seed, x).
std::vector<SweepPoint> sweep_missing(CmptModel& model, const Split& test_split,
                                      std::vector<double> x_values, std::uint64_t eval_seed,
                                      int jobs = 1);

// Per-class F1 difference (with - without), sorted descending.
std::vector<std::pair<int, double>> per_class_delta(const Metrics& with_metrics,
                                                    const Metrics& without_metrics);

struct AblationCell {
    std::string value;
    std::size_t trainable_params = 0;
    Metrics both, m1_missing, m2_missing;
};

struct AblationGrid {
    std::string axis; // "lambda" | "rank" | "mode"
    std::vector<AblationCell> cells;
};

// Trains one model per axis value from the same seed and frozen bases and
// evaluates each under {complete, inference_only:m1, inference_only:m2}.
AblationGrid run_ablation(const std::string& axis, const std::vector<std::string>& values,
                          const Split& train_split, const Split& test_split,
                          const FrozenBase& base_m1, const FrozenBase& base_m2,
                          const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                          int n_classes, std::uint64_t eval_seed, int jobs = 1);

// Last-layer attention rows for the special slots on the first `limit`
// samples, as raw JSON.
nlohmann::json attention_dump(CmptModel& model, const Split& split,
                              const MissingProtocol& protocol, std::uint64_t eval_seed, int limit);

nlohmann::json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

nlohmann::json eval_report(const Metrics& metrics, const nlohmann::json& config_echo);
nlohmann::json sweep_report(const std::vector<SweepPoint>& points, const nlohmann::json& config_echo);
nlohmann::json ablation_report(const AblationGrid& grid, const nlohmann::json& config_echo);

enum class ReportFormat { kJson, kCsv, kPlotData };
ReportFormat report_format_from_string(const std::string& s);

// csv: one row per (scenario, metric); plotdata: whitespace-separated
// columns, one line per point/scenario.
void emit_report(const nlohmann::json& report, ReportFormat format, const std::string& path);
std::string render_report(const nlohmann::json& report, ReportFormat format);

} // namespace cmpt
