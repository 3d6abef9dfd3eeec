#pragma once

#include "cmpt/gradcheck.hpp"
#include "cmpt/metrics.hpp"
#include "cmpt/run_config.hpp"

namespace cmpt::pipeline {

// Command bodies shared by the CLI and the language bindings. Each one is a
// pure function of the config plus the files it names.

// Writes the dataset file; returns per-split stats as JSON.
nlohmann::json gen_data(const RunConfig& config);

// Writes <bases_dir>/base_m1.ckpt and base_m2.ckpt.
void pretrain(const RunConfig& config);

// Reads dataset + bases, trains per config (train protocol applied to the
// train split first), writes the model checkpoint and the epoch log.
std::vector<EpochLog> train(const RunConfig& config);

// protocol_override empty -> config's eval protocol. attention_path
// non-empty -> also dump last-layer attention rows for the special tokens.
nlohmann::json eval(const RunConfig& config, const std::string& protocol_override = "",
                    const std::string& attention_path = "");

nlohmann::json sweep(const RunConfig& config, int jobs = 1);

nlohmann::json ablate(const RunConfig& config, int jobs = 1);

// Builds a freshly initialized 2-sample model at the config's dimensions and
// checks analytic gradients of the total loss against central differences.
GradCheckReport gradcheck(const RunConfig& config, std::uint64_t seed);

nlohmann::json epoch_log_to_json(const EpochLog& e);

} // namespace cmpt::pipeline
