#pragma once

#include "cmpt/graph.hpp"

namespace cmpt {

struct PresenceMask {
    bool m1_present = true;
    bool m2_present = true;
    bool complete() const { return m1_present && m2_present; }
    bool any() const { return m1_present || m2_present; }
};

enum class GateCase { kBoth, kM1Missing, kM2Missing };

struct GateOutput {
    Var token_a;
    Var token_b;
    GateCase kase = GateCase::kBoth;
};

struct FusedToken {
    Var value;
};

struct ClassifierHead {
    Tensor2D weight; // dim x classes
    Tensor2D bias;   // 1 x classes

    static ClassifierHead init(int dim, int classes, Rng& rng);
    void set_trainable(bool trainable);
    std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

// Hard availability switch: both present -> the two class tokens; one
// missing -> the available modality's class token plus its proxy token.
// Tokens of absent modalities may be passed as invalid Vars.
GateOutput gate(const PresenceMask& mask, Var cls1, Var cls2, Var cmpt1, Var cmpt2);

// Componentwise sum, no scaling.
FusedToken fuse(Graph& g, const GateOutput& gated);

// token @ weight + bias; activation left to the losses.
Var predict(Graph& g, const FusedToken& token, ClassifierHead& head);

} // namespace cmpt
