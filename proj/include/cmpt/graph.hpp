#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "cmpt/rng.hpp"
#include "cmpt/tensor.hpp"

namespace cmpt {

// Handle into a Graph's tape.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Tensor2D values. Nodes are recorded in execution
// order (a valid topological order), and backward() walks them once in
// reverse. Non-finite results abort immediately with the op's name.
//
// clear() keeps node storage so per-iteration graphs of identical shape
// reuse their buffers instead of reallocating.
class Graph {
public:
    // Leaf bound to an external tensor; backward() accumulates into
    // t.grad when t.requires_grad is set.
    Var param(Tensor2D& t);
    // Unbound constant leaf.
    Var input(Tensor2D t);
    // Constant copy of v's current value; gradients stop here.
    Var detach(Var v);

    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    Var gelu(Var a); // exact-erf form
    Var relu(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var a, Var gain, Var bias, double eps);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, int row_begin, int row_end);
    Var slice_cols(Var a, int col_begin, int col_end);
    Var sum_all(Var a);  // 1x1
    Var mean_all(Var a); // 1x1
    // Inverted dropout on the low-rank path; mask drawn from rng, saved for backward.
    Var dropout(Var a, double drop_p, Rng& rng);
    // Mean softmax cross-entropy over rows of logits (one class index per row).
    Var cross_entropy(Var logits, std::vector<int> targets);
    // Mean sigmoid binary cross-entropy over every slot of logits.
    Var bce_with_logits(Var logits, Tensor2D targets);

    const Tensor2D& value(Var v) const;
    double scalar_value(Var v) const; // value of a 1x1 node

    // Accumulates gradients of a scalar loss into every reachable bound
    // parameter with requires_grad set. The tape stays valid afterwards.
    void backward(Var loss);

    void clear();
    int node_count() const { return used_; }

private:
    enum class Op : std::uint8_t {
        kParam,
        kInput,
        kMatmul,
        kTranspose,
        kAdd,
        kSub,
        kMul,
        kScale,
        kGelu,
        kRelu,
        kSoftmaxRows,
        kLayerNorm,
        kConcatRows,
        kConcatCols,
        kSliceRows,
        kSliceCols,
        kSumAll,
        kMeanAll,
        kDropout,
        kCrossEntropy,
        kBceWithLogits,
    };

    struct Node {
        Op op = Op::kInput;
        std::array<std::int32_t, 3> in{-1, -1, -1};
        std::vector<std::int32_t> in_list; // concat inputs
        Tensor2D value;
        std::vector<double> grad;
        Tensor2D* bound = nullptr; // kParam
        Tensor2D aux;              // op-specific saved state (mask, x-hat, softmax, sigmoid)
        std::vector<double> aux_rows; // layer-norm inverse std per row
        std::vector<int> targets;     // cross-entropy class indices
        Tensor2D target_mat;          // bce targets
        double scalar = 0.0;          // scale factor / eps / drop probability
        int i0 = 0, i1 = 0;           // slice bounds
    };

    // Node storage is a deque so references stay valid while a new node is
    // being pushed; clear() keeps slots for buffer reuse across iterations.
    Node& push(Op op);
    Var finish(Node& n, const char* name);
    const Node& node(Var v) const;
    Node& node(Var v);
    void check_same_shape(Var a, Var b, const char* name) const;
    void backward_node(int idx);

    std::deque<Node> nodes_;
    int used_ = 0;
};

const char* op_name(int op_kind); // diagnostics

} // namespace cmpt
