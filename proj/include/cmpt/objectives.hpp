#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cmpt/graph.hpp"

namespace cmpt {

struct LabelTarget {
    enum class Mode { kSingle, kMulti };
    Mode mode = Mode::kSingle;
    int index = -1;                   // single-label class index
    std::vector<std::uint8_t> labels; // multi-label binary vector, length C

    static LabelTarget single(int class_index) { return LabelTarget{Mode::kSingle, class_index, {}}; }
    static LabelTarget multi(std::vector<std::uint8_t> bits) {
        return LabelTarget{Mode::kMulti, -1, std::move(bits)};
    }
};

struct LossBreakdown {
    double task = 0.0;
    double align = 0.0;
    double total = 0.0;
    double lambda = 0.0;
    int n_complete_in_batch = 0;
};

// Mean cross-entropy (single) or mean sigmoid BCE over batch x labels (multi).
// The batch must be mode-uniform.
Var task_loss(Graph& g, Var logits_batch, const std::vector<LabelTarget>& targets);

// Mean over coordinates of squared differences; width-independent scaling.
Var mse(Graph& g, Var a, Var b);

// One entry per sample that was forwarded through both encoders.
struct AlignmentPair {
    Var cmpt1, cls1, cmpt2, cls2;
};

// Sum over complete samples of mse(cmpt1, cls2) + mse(cmpt2, cls1), divided
// by their count. With stop_grad_cls the class-token operands are detached
// and act as pure regression targets. Returns an invalid Var when the batch
// holds no complete sample.
std::pair<Var, int> alignment_loss(Graph& g, const std::vector<AlignmentPair>& pairs,
                                   bool stop_grad_cls);

struct TotalLoss {
    Var node;
    LossBreakdown breakdown;
};

// task + lambda * align, align treated as zero when absent.
TotalLoss total_loss(Graph& g, Var task, Var align, double lambda, int n_complete);

} // namespace cmpt
