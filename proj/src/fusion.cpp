#include "cmpt/fusion.hpp"

namespace cmpt {

ClassifierHead ClassifierHead::init(int dim, int classes, Rng& rng) {
    ClassifierHead h;
    h.weight = Tensor2D(dim, classes);
    for (double& v : h.weight.data) v = rng.normal(0.0, 0.02);
    h.bias = Tensor2D(1, classes, 0.0);
    h.weight.requires_grad = true;
    h.bias.requires_grad = true;
    return h;
}

void ClassifierHead::set_trainable(bool trainable) {
    weight.requires_grad = trainable;
    bias.requires_grad = trainable;
}

GateOutput gate(const PresenceMask& mask, Var cls1, Var cls2, Var cmpt1, Var cmpt2) {
    if (!mask.any()) {
        throw InvalidSampleError("gate: sample has no modality present");
    }
    GateOutput out;
    if (mask.complete()) {
        if (!cls1.valid() || !cls2.valid()) {
            throw DimensionError("gate: class tokens required for both present modalities");
        }
        out.token_a = cls1;
        out.token_b = cls2;
        out.kase = GateCase::kBoth;
    } else if (!mask.m1_present) {
        if (!cls2.valid() || !cmpt2.valid()) {
            throw DimensionError("gate: tokens for modality 2 required when modality 1 is missing");
        }
        out.token_a = cls2;
        out.token_b = cmpt2;
        out.kase = GateCase::kM1Missing;
    } else {
        if (!cls1.valid() || !cmpt1.valid()) {
            throw DimensionError("gate: tokens for modality 1 required when modality 2 is missing");
        }
        out.token_a = cls1;
        out.token_b = cmpt1;
        out.kase = GateCase::kM2Missing;
    }
    return out;
}

FusedToken fuse(Graph& g, const GateOutput& gated) {
    return FusedToken{g.add(gated.token_a, gated.token_b)};
}

Var predict(Graph& g, const FusedToken& token, ClassifierHead& head) {
    return g.add(g.matmul(token.value, g.param(head.weight)), g.param(head.bias));
}

} // namespace cmpt
