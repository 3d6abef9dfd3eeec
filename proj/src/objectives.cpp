#include "cmpt/objectives.hpp"

namespace cmpt {

Var task_loss(Graph& g, Var logits_batch, const std::vector<LabelTarget>& targets) {
    if (targets.empty()) {
        throw DimensionError("task_loss: empty batch");
    }
    const Tensor2D& logits = g.value(logits_batch);
    if (logits.rows != static_cast<int>(targets.size())) {
        throw DimensionError("task_loss: one target per logits row required");
    }
    const LabelTarget::Mode mode = targets.front().mode;
    for (const auto& t : targets) {
        if (t.mode != mode) {
            throw DimensionError("task_loss: mixed label modes in one batch");
        }
    }
    if (mode == LabelTarget::Mode::kSingle) {
        std::vector<int> indices;
        indices.reserve(targets.size());
        for (const auto& t : targets) indices.push_back(t.index);
        return g.cross_entropy(logits_batch, std::move(indices));
    }
    Tensor2D target_mat(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) {
        const auto& bits = targets[static_cast<std::size_t>(r)].labels;
        if (static_cast<int>(bits.size()) != logits.cols) {
            throw DimensionError("task_loss: multi-label vector length differs from classes");
        }
        for (int c = 0; c < logits.cols; ++c) {
            target_mat.at(r, c) = static_cast<double>(bits[static_cast<std::size_t>(c)]);
        }
    }
    return g.bce_with_logits(logits_batch, std::move(target_mat));
}

Var mse(Graph& g, Var a, Var b) {
    Var diff = g.sub(a, b);
    return g.mean_all(g.mul(diff, diff));
}

std::pair<Var, int> alignment_loss(Graph& g, const std::vector<AlignmentPair>& pairs,
                                   bool stop_grad_cls) {
    Var acc;
    int n_complete = 0;
    for (const auto& p : pairs) {
        Var cls1 = stop_grad_cls ? g.detach(p.cls1) : p.cls1;
        Var cls2 = stop_grad_cls ? g.detach(p.cls2) : p.cls2;
        Var term = g.add(mse(g, p.cmpt1, cls2), mse(g, p.cmpt2, cls1));
        acc = acc.valid() ? g.add(acc, term) : term;
        ++n_complete;
    }
    if (n_complete == 0) {
        return {Var{}, 0};
    }
    return {g.scale(acc, 1.0 / static_cast<double>(n_complete)), n_complete};
}

TotalLoss total_loss(Graph& g, Var task, Var align, double lambda, int n_complete) {
    if (lambda < 0.0) {
        throw DimensionError("total_loss: lambda must be non-negative");
    }
    TotalLoss out;
    out.breakdown.task = g.scalar_value(task);
    out.breakdown.lambda = lambda;
    out.breakdown.n_complete_in_batch = n_complete;
    if (align.valid()) {
        out.breakdown.align = g.scalar_value(align);
        out.node = g.add(task, g.scale(align, lambda));
    } else {
        out.breakdown.align = 0.0;
        out.node = task;
    }
    out.breakdown.total = g.scalar_value(out.node);
    return out;
}

} // namespace cmpt
