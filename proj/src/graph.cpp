#include "cmpt/graph.hpp"

#include <cmath>

namespace cmpt {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

const char* kOpNames[] = {
    "param",        "input",      "matmul",      "transpose",  "add",
    "sub",          "mul",        "scale",       "gelu",       "relu",
    "softmax_rows", "layer_norm", "concat_rows", "concat_cols", "slice_rows",
    "slice_cols",   "sum_all",    "mean_all",    "dropout",    "cross_entropy",
    "bce_with_logits",
};

double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_derivative(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

void resize_value(Tensor2D& t, int rows, int cols) {
    t.rows = rows;
    t.cols = cols;
    t.data.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
}

} // namespace

const char* op_name(int op_kind) {
    return kOpNames[op_kind];
}

Graph::Node& Graph::push(Op op) {
    if (used_ == static_cast<int>(nodes_.size())) {
        nodes_.emplace_back();
    }
    Node& n = nodes_[used_++];
    n.op = op;
    n.in = {-1, -1, -1};
    n.in_list.clear();
    n.bound = nullptr;
    n.targets.clear();
    n.scalar = 0.0;
    n.i0 = n.i1 = 0;
    return n;
}

Var Graph::finish(Node& n, const char* name) {
    for (double v : n.value.data) {
        if (!std::isfinite(v)) {
            throw NumericsError(std::string("non-finite value produced by op '") + name + "'");
        }
    }
    return Var{used_ - 1};
}

const Graph::Node& Graph::node(Var v) const {
    return nodes_[static_cast<std::size_t>(v.id)];
}

Graph::Node& Graph::node(Var v) {
    return nodes_[static_cast<std::size_t>(v.id)];
}

void Graph::check_same_shape(Var a, Var b, const char* name) const {
    if (!node(a).value.same_shape(node(b).value)) {
        throw DimensionError(std::string(name) + ": operand shapes differ");
    }
}

Var Graph::param(Tensor2D& t) {
    Node& n = push(Op::kParam);
    n.bound = &t;
    n.value.rows = t.rows;
    n.value.cols = t.cols;
    n.value.data = t.data;
    return finish(n, "param");
}

Var Graph::input(Tensor2D t) {
    Node& n = push(Op::kInput);
    n.value.rows = t.rows;
    n.value.cols = t.cols;
    n.value.data = std::move(t.data);
    return finish(n, "input");
}

Var Graph::detach(Var v) {
    const Tensor2D& src = node(v).value;
    Node& n = push(Op::kInput);
    n.value.rows = src.rows;
    n.value.cols = src.cols;
    n.value.data = src.data;
    return Var{used_ - 1};
}

Var Graph::matmul(Var a, Var b) {
    const Tensor2D& av = node(a).value;
    const Tensor2D& bv = node(b).value;
    if (av.cols != bv.rows) {
        throw DimensionError("matmul: inner dimensions differ");
    }
    Node& n = push(Op::kMatmul);
    n.in[0] = a.id;
    n.in[1] = b.id;
    resize_value(n.value, av.rows, bv.cols);
    detail::matmul(av.data.data(), av.rows, av.cols, bv.data.data(), bv.cols, n.value.data.data());
    return finish(n, "matmul");
}

Var Graph::transpose(Var a) {
    const Tensor2D& av = node(a).value;
    Node& n = push(Op::kTranspose);
    n.in[0] = a.id;
    resize_value(n.value, av.cols, av.rows);
    for (int i = 0; i < av.rows; ++i) {
        for (int j = 0; j < av.cols; ++j) {
            n.value.at(j, i) = av.at(i, j);
        }
    }
    return finish(n, "transpose");
}

Var Graph::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    const Tensor2D& av = node(a).value;
    const Tensor2D& bv = node(b).value;
    Node& n = push(Op::kAdd);
    n.in[0] = a.id;
    n.in[1] = b.id;
    resize_value(n.value, av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] + bv.data[i];
    return finish(n, "add");
}

Var Graph::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    const Tensor2D& av = node(a).value;
    const Tensor2D& bv = node(b).value;
    Node& n = push(Op::kSub);
    n.in[0] = a.id;
    n.in[1] = b.id;
    resize_value(n.value, av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] - bv.data[i];
    return finish(n, "sub");
}

Var Graph::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    const Tensor2D& av = node(a).value;
    const Tensor2D& bv = node(b).value;
    Node& n = push(Op::kMul);
    n.in[0] = a.id;
    n.in[1] = b.id;
    resize_value(n.value, av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] * bv.data[i];
    return finish(n, "mul");
}

Var Graph::scale(Var a, double factor) {
    const Tensor2D& av = node(a).value;
    Node& n = push(Op::kScale);
    n.in[0] = a.id;
    n.scalar = factor;
    resize_value(n.value, av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] * factor;
    return finish(n, "scale");
}

Var Graph::gelu(Var a) {
    const Tensor2D& av = node(a).value;
    Node& n = push(Op::kGelu);
    n.in[0] = a.id;
    resize_value(n.value, av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = gelu_value(av.data[i]);
    return finish(n, "gelu");
}

Var Graph::relu(Var a) {
    const Tensor2D& av = node(a).value;
    Node& n = push(Op::kRelu);
    n.in[0] = a.id;
    resize_value(n.value, av.rows, av.cols);
    for (std::size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] > 0.0 ? av.data[i] : 0.0;
    return finish(n, "relu");
}

Var Graph::softmax_rows(Var a) {
    const Tensor2D& av = node(a).value;
    if (av.rows < 1 || av.cols < 1) {
        throw DimensionError("softmax_rows: empty input");
    }
    Node& n = push(Op::kSoftmaxRows);
    n.in[0] = a.id;
    resize_value(n.value, av.rows, av.cols);
    for (int r = 0; r < av.rows; ++r) {
        double mx = av.at(r, 0);
        for (int c = 1; c < av.cols; ++c) mx = std::max(mx, av.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < av.cols; ++c) {
            double e = std::exp(av.at(r, c) - mx);
            n.value.at(r, c) = e;
            sum += e;
        }
        double inv = 1.0 / sum;
        for (int c = 0; c < av.cols; ++c) n.value.at(r, c) *= inv;
    }
    return finish(n, "softmax_rows");
}

Var Graph::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
    const Tensor2D& av = node(a).value;
    const Tensor2D& gv = node(gain).value;
    const Tensor2D& bv = node(bias).value;
    if (gv.rows != 1 || bv.rows != 1 || gv.cols != av.cols || bv.cols != av.cols) {
        throw DimensionError("layer_norm: gain/bias must be 1 x cols");
    }
    if (eps <= 0.0) {
        throw DimensionError("layer_norm: eps must be positive");
    }
    Node& n = push(Op::kLayerNorm);
    n.in[0] = a.id;
    n.in[1] = gain.id;
    n.in[2] = bias.id;
    n.scalar = eps;
    resize_value(n.value, av.rows, av.cols);
    resize_value(n.aux, av.rows, av.cols); // x-hat
    n.aux_rows.resize(static_cast<std::size_t>(av.rows));
    const double inv_cols = 1.0 / av.cols;
    for (int r = 0; r < av.rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < av.cols; ++c) mean += av.at(r, c);
        mean *= inv_cols;
        double var = 0.0;
        for (int c = 0; c < av.cols; ++c) {
            double d = av.at(r, c) - mean;
            var += d * d;
        }
        var *= inv_cols;
        double inv = 1.0 / std::sqrt(var + eps);
        n.aux_rows[static_cast<std::size_t>(r)] = inv;
        for (int c = 0; c < av.cols; ++c) {
            double xhat = (av.at(r, c) - mean) * inv;
            n.aux.at(r, c) = xhat;
            n.value.at(r, c) = xhat * gv.at(0, c) + bv.at(0, c);
        }
    }
    return finish(n, "layer_norm");
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no parts");
    }
    int cols = node(parts[0]).value.cols;
    int rows = 0;
    for (Var p : parts) {
        if (node(p).value.cols != cols) {
            throw DimensionError("concat_rows: column counts differ");
        }
        rows += node(p).value.rows;
    }
    Node& n = push(Op::kConcatRows);
    for (Var p : parts) n.in_list.push_back(p.id);
    resize_value(n.value, rows, cols);
    double* out = n.value.data.data();
    for (Var p : parts) {
        const Tensor2D& pv = node(p).value;
        std::copy(pv.data.begin(), pv.data.end(), out);
        out += pv.size();
    }
    return finish(n, "concat_rows");
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no parts");
    }
    int rows = node(parts[0]).value.rows;
    int cols = 0;
    for (Var p : parts) {
        if (node(p).value.rows != rows) {
            throw DimensionError("concat_cols: row counts differ");
        }
        cols += node(p).value.cols;
    }
    Node& n = push(Op::kConcatCols);
    for (Var p : parts) n.in_list.push_back(p.id);
    resize_value(n.value, rows, cols);
    int at = 0;
    for (Var p : parts) {
        const Tensor2D& pv = node(p).value;
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < pv.cols; ++c) {
                n.value.at(r, at + c) = pv.at(r, c);
            }
        }
        at += pv.cols;
    }
    return finish(n, "concat_cols");
}

Var Graph::slice_rows(Var a, int row_begin, int row_end) {
    const Tensor2D& av = node(a).value;
    if (row_begin < 0 || row_end > av.rows || row_begin >= row_end) {
        throw DimensionError("slice_rows: bounds out of range");
    }
    Node& n = push(Op::kSliceRows);
    n.in[0] = a.id;
    n.i0 = row_begin;
    n.i1 = row_end;
    resize_value(n.value, row_end - row_begin, av.cols);
    std::copy(av.data.begin() + static_cast<std::size_t>(row_begin) * av.cols,
              av.data.begin() + static_cast<std::size_t>(row_end) * av.cols,
              n.value.data.begin());
    return finish(n, "slice_rows");
}

Var Graph::slice_cols(Var a, int col_begin, int col_end) {
    const Tensor2D& av = node(a).value;
    if (col_begin < 0 || col_end > av.cols || col_begin >= col_end) {
        throw DimensionError("slice_cols: bounds out of range");
    }
    Node& n = push(Op::kSliceCols);
    n.in[0] = a.id;
    n.i0 = col_begin;
    n.i1 = col_end;
    resize_value(n.value, av.rows, col_end - col_begin);
    for (int r = 0; r < av.rows; ++r) {
        for (int c = col_begin; c < col_end; ++c) {
            n.value.at(r, c - col_begin) = av.at(r, c);
        }
    }
    return finish(n, "slice_cols");
}

Var Graph::sum_all(Var a) {
    const Tensor2D& av = node(a).value;
    Node& n = push(Op::kSumAll);
    n.in[0] = a.id;
    resize_value(n.value, 1, 1);
    double s = 0.0;
    for (double v : av.data) s += v;
    n.value.data[0] = s;
    return finish(n, "sum_all");
}

Var Graph::mean_all(Var a) {
    const Tensor2D& av = node(a).value;
    if (av.size() == 0) {
        throw DimensionError("mean_all: empty input");
    }
    Node& n = push(Op::kMeanAll);
    n.in[0] = a.id;
    resize_value(n.value, 1, 1);
    double s = 0.0;
    for (double v : av.data) s += v;
    n.value.data[0] = s / static_cast<double>(av.size());
    return finish(n, "mean_all");
}

Var Graph::dropout(Var a, double drop_p, Rng& rng) {
    if (drop_p < 0.0 || drop_p >= 1.0) {
        throw DimensionError("dropout: probability must be in [0, 1)");
    }
    const Tensor2D& av = node(a).value;
    Node& n = push(Op::kDropout);
    n.in[0] = a.id;
    n.scalar = drop_p;
    resize_value(n.value, av.rows, av.cols);
    resize_value(n.aux, av.rows, av.cols); // mask
    const double keep_scale = 1.0 / (1.0 - drop_p);
    for (std::size_t i = 0; i < av.size(); ++i) {
        double m = rng.uniform() >= drop_p ? keep_scale : 0.0;
        n.aux.data[i] = m;
        n.value.data[i] = av.data[i] * m;
    }
    return finish(n, "dropout");
}

Var Graph::cross_entropy(Var logits, std::vector<int> targets) {
    const Tensor2D& lv = node(logits).value;
    if (lv.rows < 1 || static_cast<int>(targets.size()) != lv.rows) {
        throw DimensionError("cross_entropy: one target per logits row required");
    }
    for (int t : targets) {
        if (t < 0 || t >= lv.cols) {
            throw DimensionError("cross_entropy: class index out of range");
        }
    }
    Node& n = push(Op::kCrossEntropy);
    n.in[0] = logits.id;
    n.targets = std::move(targets);
    resize_value(n.value, 1, 1);
    resize_value(n.aux, lv.rows, lv.cols); // softmax probabilities
    double loss = 0.0;
    for (int r = 0; r < lv.rows; ++r) {
        double mx = lv.at(r, 0);
        for (int c = 1; c < lv.cols; ++c) mx = std::max(mx, lv.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < lv.cols; ++c) {
            double e = std::exp(lv.at(r, c) - mx);
            n.aux.at(r, c) = e;
            sum += e;
        }
        double inv = 1.0 / sum;
        for (int c = 0; c < lv.cols; ++c) n.aux.at(r, c) *= inv;
        loss += std::log(sum) + mx - lv.at(r, n.targets[static_cast<std::size_t>(r)]);
    }
    n.value.data[0] = loss / lv.rows;
    return finish(n, "cross_entropy");
}

Var Graph::bce_with_logits(Var logits, Tensor2D targets) {
    const Tensor2D& lv = node(logits).value;
    if (!lv.same_shape(targets)) {
        throw DimensionError("bce_with_logits: target shape differs from logits");
    }
    if (lv.size() == 0) {
        throw DimensionError("bce_with_logits: empty input");
    }
    Node& n = push(Op::kBceWithLogits);
    n.in[0] = logits.id;
    n.target_mat = std::move(targets);
    resize_value(n.value, 1, 1);
    resize_value(n.aux, lv.rows, lv.cols); // sigmoid
    double loss = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        double z = lv.data[i];
        double t = n.target_mat.data[i];
        n.aux.data[i] = 1.0 / (1.0 + std::exp(-z));
        loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    n.value.data[0] = loss / static_cast<double>(lv.size());
    return finish(n, "bce_with_logits");
}

const Tensor2D& Graph::value(Var v) const {
    return node(v).value;
}

double Graph::scalar_value(Var v) const {
    const Tensor2D& t = node(v).value;
    if (t.rows != 1 || t.cols != 1) {
        throw DimensionError("scalar_value: node is not 1x1");
    }
    return t.data[0];
}

void Graph::clear() {
    used_ = 0;
}

void Graph::backward(Var loss) {
    const Tensor2D& lv = node(loss).value;
    if (lv.rows != 1 || lv.cols != 1) {
        throw DimensionError("backward: loss must be a 1x1 node");
    }
    for (int i = 0; i < used_; ++i) {
        nodes_[static_cast<std::size_t>(i)].grad.assign(nodes_[static_cast<std::size_t>(i)].value.size(), 0.0);
    }
    node(loss).grad[0] = 1.0;
    for (int i = used_ - 1; i >= 0; --i) {
        backward_node(i);
    }
}

void Graph::backward_node(int idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    const std::vector<double>& g = n.grad;
    auto in_grad = [&](int slot) -> std::vector<double>& {
        return nodes_[static_cast<std::size_t>(n.in[slot])].grad;
    };
    auto in_value = [&](int slot) -> const Tensor2D& {
        return nodes_[static_cast<std::size_t>(n.in[slot])].value;
    };

    switch (n.op) {
    case Op::kParam:
        if (n.bound->requires_grad) {
            n.bound->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) n.bound->grad[i] += g[i];
        }
        break;
    case Op::kInput:
        break;
    case Op::kMatmul: {
        const Tensor2D& a = in_value(0);
        const Tensor2D& b = in_value(1);
        // dA += dC * B^T, dB += A^T * dC
        detail::matmul_acc_abt(g.data(), a.rows, b.cols, b.data.data(), b.rows, in_grad(0).data());
        detail::matmul_acc_atb(a.data.data(), a.rows, a.cols, g.data(), b.cols, in_grad(1).data());
        break;
    }
    case Op::kTranspose: {
        const Tensor2D& a = in_value(0);
        std::vector<double>& da = in_grad(0);
        for (int i = 0; i < a.rows; ++i) {
            for (int j = 0; j < a.cols; ++j) {
                da[static_cast<std::size_t>(i) * a.cols + j] +=
                    g[static_cast<std::size_t>(j) * a.rows + i];
            }
        }
        break;
    }
    case Op::kAdd: {
        std::vector<double>& da = in_grad(0);
        std::vector<double>& db = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i];
            db[i] += g[i];
        }
        break;
    }
    case Op::kSub: {
        std::vector<double>& da = in_grad(0);
        std::vector<double>& db = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i];
            db[i] -= g[i];
        }
        break;
    }
    case Op::kMul: {
        const Tensor2D& a = in_value(0);
        const Tensor2D& b = in_value(1);
        std::vector<double>& da = in_grad(0);
        std::vector<double>& db = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i] * b.data[i];
            db[i] += g[i] * a.data[i];
        }
        break;
    }
    case Op::kScale: {
        std::vector<double>& da = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.scalar;
        break;
    }
    case Op::kGelu: {
        const Tensor2D& a = in_value(0);
        std::vector<double>& da = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * gelu_derivative(a.data[i]);
        break;
    }
    case Op::kRelu: {
        const Tensor2D& a = in_value(0);
        std::vector<double>& da = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (a.data[i] > 0.0) da[i] += g[i];
        }
        break;
    }
    case Op::kSoftmaxRows: {
        const Tensor2D& y = n.value;
        std::vector<double>& da = in_grad(0);
        for (int r = 0; r < y.rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * y.cols;
            double dot = 0.0;
            for (int c = 0; c < y.cols; ++c) dot += g[off + c] * y.data[off + c];
            for (int c = 0; c < y.cols; ++c) {
                da[off + c] += y.data[off + c] * (g[off + c] - dot);
            }
        }
        break;
    }
    case Op::kLayerNorm: {
        const Tensor2D& xhat = n.aux;
        const Tensor2D& gain = in_value(1);
        std::vector<double>& dx = in_grad(0);
        std::vector<double>& dgain = in_grad(1);
        std::vector<double>& dbias = in_grad(2);
        const int cols = xhat.cols;
        const double inv_cols = 1.0 / cols;
        for (int r = 0; r < xhat.rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * cols;
            const double inv = n.aux_rows[static_cast<std::size_t>(r)];
            double m1 = 0.0, m2 = 0.0;
            for (int c = 0; c < cols; ++c) {
                double dxhat = g[off + c] * gain.data[static_cast<std::size_t>(c)];
                m1 += dxhat;
                m2 += dxhat * xhat.data[off + c];
                dgain[static_cast<std::size_t>(c)] += g[off + c] * xhat.data[off + c];
                dbias[static_cast<std::size_t>(c)] += g[off + c];
            }
            m1 *= inv_cols;
            m2 *= inv_cols;
            for (int c = 0; c < cols; ++c) {
                double dxhat = g[off + c] * gain.data[static_cast<std::size_t>(c)];
                dx[off + c] += inv * (dxhat - m1 - xhat.data[off + c] * m2);
            }
        }
        break;
    }
    case Op::kConcatRows: {
        std::size_t at = 0;
        for (std::int32_t pid : n.in_list) {
            Node& p = nodes_[static_cast<std::size_t>(pid)];
            for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += g[at + i];
            at += p.value.size();
        }
        break;
    }
    case Op::kConcatCols: {
        int at = 0;
        for (std::int32_t pid : n.in_list) {
            Node& p = nodes_[static_cast<std::size_t>(pid)];
            for (int r = 0; r < p.value.rows; ++r) {
                for (int c = 0; c < p.value.cols; ++c) {
                    p.grad[static_cast<std::size_t>(r) * p.value.cols + c] +=
                        g[static_cast<std::size_t>(r) * n.value.cols + at + c];
                }
            }
            at += p.value.cols;
        }
        break;
    }
    case Op::kSliceRows: {
        const Tensor2D& a = in_value(0);
        std::vector<double>& da = in_grad(0);
        const std::size_t off = static_cast<std::size_t>(n.i0) * a.cols;
        for (std::size_t i = 0; i < g.size(); ++i) da[off + i] += g[i];
        break;
    }
    case Op::kSliceCols: {
        const Tensor2D& a = in_value(0);
        std::vector<double>& da = in_grad(0);
        const int width = n.i1 - n.i0;
        for (int r = 0; r < a.rows; ++r) {
            for (int c = 0; c < width; ++c) {
                da[static_cast<std::size_t>(r) * a.cols + n.i0 + c] +=
                    g[static_cast<std::size_t>(r) * width + c];
            }
        }
        break;
    }
    case Op::kSumAll: {
        std::vector<double>& da = in_grad(0);
        const double s = g[0];
        for (double& d : da) d += s;
        break;
    }
    case Op::kMeanAll: {
        std::vector<double>& da = in_grad(0);
        const double s = g[0] / static_cast<double>(da.size());
        for (double& d : da) d += s;
        break;
    }
    case Op::kDropout: {
        std::vector<double>& da = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.aux.data[i];
        break;
    }
    case Op::kCrossEntropy: {
        const Tensor2D& probs = n.aux;
        std::vector<double>& da = in_grad(0);
        const double s = g[0] / probs.rows;
        for (int r = 0; r < probs.rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * probs.cols;
            for (int c = 0; c < probs.cols; ++c) da[off + c] += s * probs.data[off + c];
            da[off + n.targets[static_cast<std::size_t>(r)]] -= s;
        }
        break;
    }
    case Op::kBceWithLogits: {
        const Tensor2D& sig = n.aux;
        std::vector<double>& da = in_grad(0);
        const double s = g[0] / static_cast<double>(sig.size());
        for (std::size_t i = 0; i < sig.size(); ++i) {
            da[i] += s * (sig.data[i] - n.target_mat.data[i]);
        }
        break;
    }
    }
}

} // namespace cmpt
