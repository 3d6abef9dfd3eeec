#include "doctest.h"

#include "cmpt/fusion.hpp"
#include "cmpt/gradcheck.hpp"

using namespace cmpt;

namespace {

Var token(Graph& g, std::vector<double> values) {
    return g.input(Tensor2D::row_vector(std::move(values)));
}

} // namespace

TEST_SUITE("fusion") {

TEST_CASE("gate truth table") {
    Graph g;
    Var cls1 = token(g, {1, 0});
    Var cls2 = token(g, {2, 0});
    Var cmpt1 = token(g, {3, 0});
    Var cmpt2 = token(g, {4, 0});

    GateOutput both = gate(PresenceMask{true, true}, cls1, cls2, cmpt1, cmpt2);
    CHECK(both.kase == GateCase::kBoth);
    CHECK(both.token_a.id == cls1.id);
    CHECK(both.token_b.id == cls2.id);

    GateOutput m1_missing = gate(PresenceMask{false, true}, Var{}, cls2, Var{}, cmpt2);
    CHECK(m1_missing.kase == GateCase::kM1Missing);
    CHECK(m1_missing.token_a.id == cls2.id);
    CHECK(m1_missing.token_b.id == cmpt2.id);

    GateOutput m2_missing = gate(PresenceMask{true, false}, cls1, Var{}, cmpt1, Var{});
    CHECK(m2_missing.kase == GateCase::kM2Missing);
    CHECK(m2_missing.token_a.id == cls1.id);
    CHECK(m2_missing.token_b.id == cmpt1.id);

    CHECK_THROWS_AS(gate(PresenceMask{false, false}, cls1, cls2, cmpt1, cmpt2),
                    InvalidSampleError);
}

TEST_CASE("fuse adds componentwise without scaling") {
    Graph g;
    GateOutput gated{token(g, {1, 2}), token(g, {3, 4}), GateCase::kBoth};
    const Tensor2D& fused = g.value(fuse(g, gated).value);
    CHECK(fused.at(0, 0) == 4.0);
    CHECK(fused.at(0, 1) == 6.0);

    Var x = token(g, {1.5, -2.5});
    GateOutput with_zero{x, token(g, {0, 0}), GateCase::kBoth};
    CHECK(g.value(fuse(g, with_zero).value).data == g.value(x).data);

    GateOutput swapped{gated.token_b, gated.token_a, GateCase::kBoth};
    CHECK(g.value(fuse(g, swapped).value).data == fused.data);

    GateOutput mismatch{token(g, {1, 2}), token(g, {1, 2, 3}), GateCase::kBoth};
    CHECK_THROWS_AS(fuse(g, mismatch), DimensionError);
}

TEST_CASE("predict applies the linear head with no activation") {
    Rng rng(1);
    ClassifierHead head = ClassifierHead::init(3, 4, rng);
    Graph g;
    for (double& v : head.weight.data) v = 0.0;
    const Tensor2D& zero_logits =
        g.value(predict(g, FusedToken{token(g, {1, 2, 3})}, head));
    for (double v : zero_logits.data) CHECK(v == 0.0);

    // identity-like slice recovers token coordinates
    head.weight = Tensor2D(3, 4, 0.0);
    head.weight.at(0, 0) = 1.0;
    head.weight.at(1, 1) = 1.0;
    head.weight.at(2, 2) = 1.0;
    Graph g2;
    const Tensor2D& logits = g2.value(predict(g2, FusedToken{token(g2, {5, 6, 7})}, head));
    CHECK(logits.at(0, 0) == 5.0);
    CHECK(logits.at(0, 1) == 6.0);
    CHECK(logits.at(0, 2) == 7.0);
    CHECK(logits.at(0, 3) == 0.0);
}

TEST_CASE("logits are differentiable wrt head and token") {
    Rng rng(2);
    ClassifierHead head = ClassifierHead::init(3, 2, rng);
    Tensor2D tok(1, 3);
    for (double& v : tok.data) v = rng.normal();
    tok.requires_grad = true;
    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        Var logits = predict(g, FusedToken{g.param(tok)}, head);
        Var l = g.mean_all(g.mul(logits, logits));
        if (with_grad) g.backward(l);
        return g.scalar_value(l);
    };
    CHECK(finite_difference_check(loss, {&tok, &head.weight, &head.bias}, 1e-5).max_rel_error <
          1e-4);
}

TEST_CASE("argmax is invariant to positive scaling with zero bias") {
    Rng rng(3);
    ClassifierHead head = ClassifierHead::init(5, 6, rng);
    for (double& v : head.bias.data) v = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> tok(5);
        for (double& v : tok) v = rng.normal();
        const double c = 0.1 + 5.0 * rng.uniform();

        auto argmax_of = [&](const std::vector<double>& t) {
            Graph g;
            const Tensor2D& logits = g.value(predict(g, FusedToken{token(g, std::vector<double>(t))}, head));
            int best = 0;
            for (int i = 1; i < logits.cols; ++i) {
                if (logits.at(0, i) > logits.at(0, best)) best = i;
            }
            return best;
        };
        std::vector<double> scaled = tok;
        for (double& v : scaled) v *= c;
        CHECK(argmax_of(tok) == argmax_of(scaled));
    }
}

TEST_CASE("proxy tokens have no influence on the both-present path") {
    Rng rng(4);
    ClassifierHead head = ClassifierHead::init(4, 3, rng);
    Graph g;
    Var cls1 = token(g, {1, 2, 3, 4});
    Var cls2 = token(g, {5, 6, 7, 8});
    Var cmpt1 = token(g, {0.1, 0.2, 0.3, 0.4});
    Var cmpt2 = token(g, {0.5, 0.6, 0.7, 0.8});
    const auto base =
        g.value(predict(g, fuse(g, gate(PresenceMask{true, true}, cls1, cls2, cmpt1, cmpt2)), head))
            .data;

    Var cmpt1_perturbed = token(g, {100, -100, 100, -100});
    Var cmpt2_perturbed = token(g, {-7, 7, -7, 7});
    const auto perturbed =
        g.value(predict(
                     g, fuse(g, gate(PresenceMask{true, true}, cls1, cls2, cmpt1_perturbed,
                                     cmpt2_perturbed)),
                     head))
            .data;
    CHECK(base == perturbed);
}

} // TEST_SUITE
