#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cmpt/checkpoint.hpp"
#include "test_helpers.hpp"

using namespace cmpt;
using namespace cmpt::testing;

TEST_SUITE("checkpoint") {

TEST_CASE("model round trip reproduces forward outputs bitwise") {
    CmptModel model = tiny_model();
    Rng rng(41);
    Sample probe = random_sample(tiny_dataset_config(), rng);

    auto logits_of = [&](CmptModel& m) {
        Graph g;
        auto tokens = m.forward_tokens(g, probe, probe.mask, false, nullptr);
        return g.value(m.sample_logits(g, tokens, probe.mask)).data;
    };
    const auto before = logits_of(model);

    const std::string path = "test_model_roundtrip.ckpt";
    save_model(path, model, nlohmann::json{{"seed", 42}});
    CmptModel loaded = load_model(path);
    std::remove(path.c_str());

    CHECK(logits_of(loaded) == before);
    CHECK(loaded.trainable_parameter_count() == model.trainable_parameter_count());
}

TEST_CASE("bases round trip preserves frozen tags") {
    ModelConfig cfg = tiny_model_config();
    FrozenBase base = random_base(cfg, 4, 17);
    const std::string path = "test_bases_roundtrip.ckpt";
    save_bases(path, base, nlohmann::json{{"seed", 17}});
    FrozenBase loaded = load_bases(path);
    std::remove(path.c_str());
    CHECK(loaded.cls.data == base.cls.data);
    CHECK(loaded.encoder.layers[0].w_ff2.data == base.encoder.layers[0].w_ff2.data);
    CHECK_FALSE(loaded.cls.requires_grad);
}

TEST_CASE("manifest trainable tags match the requires_grad enumeration") {
    CmptModel model = tiny_model();
    const std::string path = "test_tags.ckpt";
    save_model(path, model, nlohmann::json::object());
    LoadedCheckpoint ckpt = load_checkpoint(path);
    std::remove(path.c_str());

    std::size_t trainable_from_tags = 0;
    for (const auto& [name, tag] : ckpt.trainable_tags) {
        if (tag) trainable_from_tags += ckpt.tensors.at(name).size();
    }
    CHECK(trainable_from_tags == model.trainable_parameter_count());
}

TEST_CASE("truncated payload is reported as corruption") {
    CmptModel model = tiny_model();
    const std::string path = "test_truncated.ckpt";
    save_model(path, model, nlohmann::json::object());
    const auto full_size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full_size - 64);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("wrong magic and wrong kind are rejected") {
    const std::string path = "test_not_a_ckpt.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "garbage";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::remove(path.c_str());

    CmptModel model = tiny_model();
    const std::string mpath = "test_kind.ckpt";
    save_model(mpath, model, nlohmann::json::object());
    CHECK_THROWS_AS(load_bases(mpath), DataError);
    std::remove(mpath.c_str());
}

TEST_CASE("same build and seed produce identical checkpoint bytes") {
    auto bytes_of = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CmptModel a = tiny_model(true, 77);
    CmptModel b = tiny_model(true, 77);
    save_model("test_bytes_a.ckpt", a, nlohmann::json{{"seed", 77}});
    save_model("test_bytes_b.ckpt", b, nlohmann::json{{"seed", 77}});
    CHECK(bytes_of("test_bytes_a.ckpt") == bytes_of("test_bytes_b.ckpt"));
    std::remove("test_bytes_a.ckpt");
    std::remove("test_bytes_b.ckpt");
}

} // TEST_SUITE
