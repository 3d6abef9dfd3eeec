#include "doctest.h"

#include "cmpt/train.hpp"
#include "test_helpers.hpp"

using namespace cmpt;
using namespace cmpt::testing;

TEST_SUITE("model") {

TEST_CASE("zero-init model forward equals the adapter-free frozen forward bitwise") {
    CmptModel model = tiny_model();
    Rng rng(31);
    Sample s = random_sample(tiny_dataset_config(), rng);

    Graph g;
    auto tokens = model.forward_tokens(g, s, s.mask, false, nullptr);
    const auto with_adapters = g.value(model.sample_logits(g, tokens, s.mask)).data;

    // adapter-free reference through the same frozen weights
    Graph g2;
    auto encode_plain = [&](int mod, const std::vector<double>& raw) {
        Var content = embed(g2, raw, model.embedders[static_cast<std::size_t>(mod)]);
        AssembledSequence seq =
            assemble(g2, content, model.specials[static_cast<std::size_t>(mod)], true);
        EncodedSequence enc = encode(g2, seq, model.encoders[static_cast<std::size_t>(mod)],
                                     nullptr, false, nullptr, model.cfg.mask_cmpt_from_cls);
        return extract(g2, enc, TokenSlot::kCls);
    };
    Var cls1 = encode_plain(0, s.raw_m1);
    Var cls2 = encode_plain(1, s.raw_m2);
    Var logits = predict(g2, fuse(g2, gate(s.mask, cls1, cls2, Var{}, Var{})), model.head);
    CHECK(g2.value(logits).data == with_adapters);
}

TEST_CASE("alignment value ignores inserted incomplete samples exactly") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Rng rng(32);
    Sample c1 = random_sample(dcfg, rng);
    Sample c2 = random_sample(dcfg, rng);
    Sample m1_only = random_sample(dcfg, rng, true, false);
    Sample m2_only = random_sample(dcfg, rng, false, true);

    auto align_of = [&](std::vector<const Sample*> batch) {
        std::vector<PresenceMask> masks;
        for (const Sample* s : batch) masks.push_back(s->mask);
        Graph g;
        auto loss = model.batch_loss(g, batch, masks, 0.2, false, nullptr);
        return loss.breakdown.align;
    };

    const double base = align_of({&c1, &c2});
    CHECK(align_of({&c1, &c2, &m1_only}) == base);
    CHECK(align_of({&c1, &c2, &m1_only, &m2_only}) == base);
    CHECK(align_of({&c1, &c2, &m2_only, &m1_only, &m1_only}) == base);
}

TEST_CASE("batch loss reports the complete-sample count and exact total") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Rng rng(33);
    Sample c = random_sample(dcfg, rng);
    Sample p = random_sample(dcfg, rng, false, true);
    std::vector<const Sample*> batch = {&c, &p};
    std::vector<PresenceMask> masks = {c.mask, p.mask};
    Graph g;
    auto loss = model.batch_loss(g, batch, masks, 0.2, false, nullptr);
    CHECK(loss.breakdown.n_complete_in_batch == 1);
    CHECK(std::abs(loss.breakdown.total -
                   (loss.breakdown.task + 0.2 * loss.breakdown.align)) <= 1e-12);
}

TEST_CASE("trainable parameter enumeration matches the closed form") {
    CmptModel model = tiny_model();
    const ModelConfig& cfg = model.cfg;
    const std::size_t expected = 2ull * 8 * cfg.layers * cfg.dim * cfg.lora_rank + 2 * cfg.dim +
                                 static_cast<std::size_t>(cfg.dim) * model.n_classes +
                                 model.n_classes;
    CHECK(model.trainable_parameter_count() == expected);

    std::size_t by_tag = 0;
    for (auto& nt : model.named_tensors()) {
        if (nt.tensor->requires_grad) by_tag += nt.tensor->size();
    }
    CHECK(by_tag == expected);
}

TEST_CASE("every adapter factor and proxy token receives gradient after a warm step") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Rng rng(34);
    std::vector<Sample> samples;
    for (int i = 0; i < 6; ++i) samples.push_back(random_sample(dcfg, rng));
    std::vector<const Sample*> batch;
    std::vector<PresenceMask> masks;
    for (auto& s : samples) {
        batch.push_back(&s);
        masks.push_back(s.mask);
    }
    // simulate one dropped modality so the proxy path feeds the task loss too
    masks[1] = PresenceMask{false, true};
    masks[2] = PresenceMask{true, false};

    TrainConfig tc;
    tc.lr = 1e-3;
    auto params = model.trainable_tensors();
    AdamWState state;
    state.init(params);

    // warm step: up factors move off zero so down factors get gradient
    Graph g;
    auto loss = model.batch_loss(g, batch, masks, 0.2, false, nullptr);
    for (auto* p : params) p->zero_grad();
    g.backward(loss.node);
    adamw_step(params, state, 1e-3, tc);

    Graph g2;
    auto loss2 = model.batch_loss(g2, batch, masks, 0.2, false, nullptr);
    for (auto* p : params) p->zero_grad();
    g2.backward(loss2.node);

    for (int mod = 0; mod < 2; ++mod) {
        CHECK(model.specials[static_cast<std::size_t>(mod)].cmpt.grad_norm() > 0.0);
        for (auto& la : model.adapters[static_cast<std::size_t>(mod)]) {
            for (const LoraAdapter* a : {&la.query, &la.key, &la.value, &la.output}) {
                CHECK(a->down.grad_norm() > 0.0);
                CHECK(a->up.grad_norm() > 0.0);
            }
        }
    }
}

TEST_CASE("baseline variant runs placeholders through both encoders") {
    CmptModel model = tiny_model(false);
    DatasetConfig dcfg = tiny_dataset_config();
    Rng rng(35);
    Sample s = random_sample(dcfg, rng, true, false); // m2 physically missing
    Graph g;
    auto tokens = model.forward_tokens(g, s, s.mask, false, nullptr);
    CHECK(tokens.forwarded_m1);
    CHECK(tokens.forwarded_m2); // zero placeholder path
    CHECK_FALSE(tokens.cmpt1.valid());
    Var logits = model.sample_logits(g, tokens, s.mask);
    CHECK(g.value(logits).cols == model.n_classes);
}

TEST_CASE("proxy model skips the encoder of a physically missing modality") {
    CmptModel model = tiny_model();
    DatasetConfig dcfg = tiny_dataset_config();
    Rng rng(36);
    Sample s = random_sample(dcfg, rng, false, true);
    Graph g;
    auto tokens = model.forward_tokens(g, s, s.mask, false, nullptr);
    CHECK_FALSE(tokens.forwarded_m1);
    CHECK(tokens.forwarded_m2);
    CHECK_FALSE(tokens.cls1.valid());
}

} // TEST_SUITE
