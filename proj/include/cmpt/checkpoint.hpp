#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmpt/model.hpp"

namespace cmpt {

// Container format: magic line, u64 little-endian manifest length, JSON
// manifest (tensor name -> shape -> byte offset, frozen/trainable tags,
// config echo), then raw little-endian IEEE-754 doubles.

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& meta, const std::vector<NamedTensor>& tensors);

struct LoadedCheckpoint {
    std::string kind;
    nlohmann::json meta;
    std::map<std::string, Tensor2D> tensors;
    std::map<std::string, bool> trainable_tags;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

void save_bases(const std::string& path, FrozenBase& base, const nlohmann::json& meta);
FrozenBase load_bases(const std::string& path);

void save_model(const std::string& path, CmptModel& model, const nlohmann::json& extra_meta);
CmptModel load_model(const std::string& path);

} // namespace cmpt
