#include "doctest.h"

#include "cmpt/run_config.hpp"

using namespace cmpt;

namespace {

nlohmann::json minimal_config() {
    return nlohmann::json{{"seed", 5}};
}

} // namespace

TEST_SUITE("run_config") {

TEST_CASE("defaults load and validate") {
    RunConfig cfg = RunConfig::from_json(minimal_config());
    CHECK(cfg.seed == 5);
    CHECK(cfg.dataset.n_classes == 10);
    CHECK(cfg.train.lambda == 0.2);
    CHECK(cfg.train.mode == TrainMode::kCmpt);
    CHECK(cfg.pretrain.epochs == 10);
}

TEST_CASE("unknown keys are rejected at every level") {
    auto bad_top = minimal_config();
    bad_top["surprise"] = 1;
    CHECK_THROWS_AS(RunConfig::from_json(bad_top), ConfigError);

    auto bad_nested = minimal_config();
    bad_nested["train"] = nlohmann::json{{"lr", 0.001}, {"momentum", 0.9}};
    CHECK_THROWS_AS(RunConfig::from_json(bad_nested), ConfigError);

    auto bad_dataset = minimal_config();
    bad_dataset["dataset"] = nlohmann::json{{"classes", 10}};
    CHECK_THROWS_AS(RunConfig::from_json(bad_dataset), ConfigError);
}

TEST_CASE("values are validated after merge") {
    auto bad = minimal_config();
    bad["train"] = nlohmann::json{{"lambda", -1.0}};
    CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);

    auto bad_betas = minimal_config();
    bad_betas["train"] = nlohmann::json{{"betas", {0.9}}};
    CHECK_THROWS_AS(RunConfig::from_json(bad_betas), ConfigError);

    auto bad_protocol = minimal_config();
    bad_protocol["protocols"] = nlohmann::json{{"eval", "sometimes"}};
    CHECK_THROWS_AS(RunConfig::from_json(bad_protocol), ConfigError);

    auto bad_tokens = minimal_config();
    bad_tokens["model"] = nlohmann::json{{"max_tokens", 2}};
    CHECK_THROWS_AS(RunConfig::from_json(bad_tokens), ConfigError);
}

TEST_CASE("config echo mirrors the full configuration") {
    RunConfig cfg = RunConfig::from_json(minimal_config());
    nlohmann::json echo = cfg.to_json();
    RunConfig back = RunConfig::from_json(echo);
    CHECK(back.to_json() == echo);
}

TEST_CASE("rebase moves every output path") {
    RunConfig cfg = RunConfig::from_json(minimal_config());
    cfg.rebase_outputs("elsewhere");
    CHECK(cfg.paths.data == "elsewhere/dataset.cmpt");
    CHECK(cfg.paths.bases_dir == "elsewhere");
    CHECK(cfg.paths.model == "elsewhere/model.ckpt");
}

} // TEST_SUITE
