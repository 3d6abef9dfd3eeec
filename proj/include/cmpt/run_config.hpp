#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cmpt/data.hpp"
#include "cmpt/model.hpp"
#include "cmpt/train.hpp"

namespace cmpt {

struct RunPaths {
    std::string data = "out/dataset.cmpt";
    std::string bases_dir = "out";
    std::string model = "out/model.ckpt";
    std::string train_log = "out/train_log.jsonl";
    std::string report = "out/report.json";
};

// Whole-experiment configuration: one JSON file, strict keys, dotted-path
// overrides. The top-level seed drives every derived stream.
struct RunConfig {
    std::uint64_t seed = 1;
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig pretrain;
    TrainConfig train;
    std::string protocol_train = "complete";
    std::string protocol_eval = "complete";
    std::vector<double> sweep_points{100, 90, 70, 50, 30, 10, 0};
    std::string ablation_axis = "mode";
    std::vector<std::string> ablation_values{"baseline", "dropout_only", "cmpt"};
    RunPaths paths;

    RunConfig();

    // Loads the file, applies "a.b.c=value" overrides, validates everything.
    static RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {});
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;

    // Points every output path into dir, keeping file names.
    void rebase_outputs(const std::string& dir);
};

} // namespace cmpt
