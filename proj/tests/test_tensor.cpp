#include "doctest.h"

#include <cmath>

#include "cmpt/gradcheck.hpp"
#include "cmpt/graph.hpp"

using namespace cmpt;

namespace {

Tensor2D random_tensor(int rows, int cols, Rng& rng, bool trainable = true) {
    Tensor2D t(rows, cols);
    for (double& v : t.data) v = rng.normal();
    t.requires_grad = trainable;
    return t;
}

// gradcheck driver for a single-tensor op
double check_unary(const std::function<Var(Graph&, Var)>& op, int rows, int cols,
                   std::uint64_t seed) {
    Rng rng(seed);
    Tensor2D x = random_tensor(rows, cols, rng);
    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        Var l = g.mean_all(op(g, g.param(x)));
        if (with_grad) g.backward(l);
        return g.scalar_value(l);
    };
    return finite_difference_check(loss, {&x}, 1e-5).max_rel_error;
}

} // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity") {
    Graph g;
    Var a = g.input(Tensor2D::from_rows({{1, 0}, {0, 1}}));
    Var b = g.input(Tensor2D::from_rows({{2, 3}, {4, 5}}));
    const Tensor2D& c = g.value(g.matmul(a, b));
    CHECK(c.at(0, 0) == 2.0);
    CHECK(c.at(0, 1) == 3.0);
    CHECK(c.at(1, 0) == 4.0);
    CHECK(c.at(1, 1) == 5.0);
}

TEST_CASE("matmul hand arithmetic") {
    Graph g;
    Var a = g.input(Tensor2D::from_rows({{1, 0}}));
    Var b = g.input(Tensor2D::from_rows({{0}, {7}}));
    CHECK(g.scalar_value(g.matmul(a, b)) == 0.0);
}

TEST_CASE("matmul gradient of sum(A*B) wrt A is B^T") {
    Tensor2D a = Tensor2D::from_rows({{1, 2}});
    a.requires_grad = true;
    Tensor2D b = Tensor2D::from_rows({{3}, {4}});
    Graph g;
    Var loss = g.sum_all(g.matmul(g.param(a), g.param(b)));
    g.backward(loss);
    REQUIRE(a.grad.size() == 2);
    CHECK(a.grad[0] == 3.0);
    CHECK(a.grad[1] == 4.0);
}

TEST_CASE("matmul shape mismatch") {
    Graph g;
    Var a = g.input(Tensor2D(2, 3, 1.0));
    Var b = g.input(Tensor2D(2, 2, 1.0));
    CHECK_THROWS_AS(g.matmul(a, b), DimensionError);
}

TEST_CASE("elementwise examples") {
    Graph g;
    Var a = g.input(Tensor2D::from_rows({{1, 2}}));
    Var b = g.input(Tensor2D::from_rows({{3, 4}}));
    const Tensor2D& sum = g.value(g.add(a, b));
    CHECK(sum.at(0, 0) == 4.0);
    CHECK(sum.at(0, 1) == 6.0);

    Var c = g.input(Tensor2D::from_rows({{1, -1}}));
    const Tensor2D& scaled = g.value(g.scale(c, 0.2));
    CHECK(scaled.at(0, 0) == doctest::Approx(0.2));
    CHECK(scaled.at(0, 1) == doctest::Approx(-0.2));

    CHECK_THROWS_AS(g.add(a, g.input(Tensor2D(1, 3, 0.0))), DimensionError);
}

TEST_CASE("gelu derivative at zero is exactly one half") {
    Tensor2D x(1, 1, 0.0);
    x.requires_grad = true;
    Graph g;
    Var loss = g.sum_all(g.gelu(g.param(x)));
    g.backward(loss);
    CHECK(x.grad[0] == 0.5);
}

TEST_CASE("softmax symmetry and stability") {
    Graph g;
    const Tensor2D& y = g.value(g.softmax_rows(g.input(Tensor2D::from_rows({{0, 0}}))));
    CHECK(y.at(0, 0) == 0.5);
    CHECK(y.at(0, 1) == 0.5);

    const Tensor2D& big = g.value(g.softmax_rows(g.input(Tensor2D::from_rows({{1000, 0}}))));
    CHECK(big.at(0, 0) == doctest::Approx(1.0));
    CHECK(big.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("softmax row sums within 1e-12") {
    Rng rng(7);
    Tensor2D x = random_tensor(5, 7, rng, false);
    Graph g;
    const Tensor2D& y = g.value(g.softmax_rows(g.input(x)));
    for (int r = 0; r < 5; ++r) {
        double s = 0.0;
        for (int c = 0; c < 7; ++c) s += y.at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax rejects empty input") {
    Graph g;
    CHECK_THROWS_AS(g.softmax_rows(g.input(Tensor2D(0, 3))), DimensionError);
}

TEST_CASE("layer norm examples") {
    Graph g;
    Var gain = g.input(Tensor2D(1, 2, 1.0));
    Var bias = g.input(Tensor2D(1, 2, 0.0));
    const Tensor2D& y =
        g.value(g.layer_norm_rows(g.input(Tensor2D::from_rows({{1, 3}})), gain, bias, 1e-12));
    CHECK(y.at(0, 0) == doctest::Approx(-1.0));
    CHECK(y.at(0, 1) == doctest::Approx(1.0));

    Var gain3 = g.input(Tensor2D(1, 3, 1.0));
    Var bias3 = g.input(Tensor2D(1, 3, 0.0));
    const Tensor2D& constant =
        g.value(g.layer_norm_rows(g.input(Tensor2D::from_rows({{5, 5, 5}})), gain3, bias3, 1e-6));
    for (int c = 0; c < 3; ++c) CHECK(constant.at(0, c) == 0.0);
}

TEST_CASE("layer norm output rows have near-zero mean with zero bias") {
    Rng rng(11);
    Tensor2D x = random_tensor(4, 8, rng, false);
    Graph g;
    Var gain = g.input(Tensor2D(1, 8, 1.37));
    Var bias = g.input(Tensor2D(1, 8, 0.0));
    const Tensor2D& y = g.value(g.layer_norm_rows(g.input(x), gain, bias, 1e-6));
    for (int r = 0; r < 4; ++r) {
        double mean = 0.0;
        for (int c = 0; c < 8; ++c) mean += y.at(r, c);
        mean /= 8.0;
        CHECK(std::abs(mean) <= 1e-10);
    }
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Tensor2D x(1, 1, 3.0);
    x.requires_grad = true;
    Graph g;
    Var xv = g.param(x);
    g.backward(g.sum_all(g.mul(xv, xv)));
    CHECK(x.grad[0] == 6.0);
}

TEST_CASE("parameter unused by the loss keeps a zero grad") {
    Tensor2D used(1, 2, 1.0);
    used.requires_grad = true;
    Tensor2D unused(1, 2, 1.0);
    unused.requires_grad = true;
    unused.zero_grad();
    Graph g;
    Var loss = g.sum_all(g.param(used));
    g.param(unused); // on the tape but disconnected
    g.backward(loss);
    CHECK(unused.grad[0] == 0.0);
    CHECK(unused.grad[1] == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
    Graph g;
    Var v = g.input(Tensor2D(2, 2, 1.0));
    CHECK_THROWS_AS(g.backward(v), DimensionError);
}

TEST_CASE("chained matmul+softmax+mse gradients match finite differences") {
    Rng rng(3);
    Tensor2D a = random_tensor(3, 4, rng);
    Tensor2D b = random_tensor(4, 5, rng);
    Tensor2D target = random_tensor(3, 5, rng, false);
    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        Var y = g.softmax_rows(g.matmul(g.param(a), g.param(b)));
        Var d = g.sub(y, g.input(target));
        Var l = g.mean_all(g.mul(d, d));
        if (with_grad) g.backward(l);
        return g.scalar_value(l);
    };
    CHECK(finite_difference_check(loss, {&a, &b}, 1e-5).max_rel_error < 1e-4);
}

TEST_CASE("per-op gradients match finite differences on randomized shapes") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng shape_rng(seed * 977);
        const int rows = 1 + shape_rng.uniform_int(8);
        const int cols = 2 + shape_rng.uniform_int(7);

        CHECK(check_unary([](Graph& g, Var x) { return g.gelu(x); }, rows, cols, seed) < 1e-4);
        CHECK(check_unary([](Graph& g, Var x) { return g.softmax_rows(x); }, rows, cols, seed) <
              1e-4);
        CHECK(check_unary([](Graph& g, Var x) { return g.transpose(g.scale(x, 1.7)); }, rows, cols,
                          seed) < 1e-4);
        CHECK(check_unary([cols](Graph& g, Var x) { return g.slice_cols(x, 1, cols); }, rows, cols,
                          seed) < 1e-4);

        // layer norm with trainable gain/bias
        Rng rng(seed * 31 + 1);
        Tensor2D x = random_tensor(rows, cols, rng);
        Tensor2D gain = random_tensor(1, cols, rng);
        Tensor2D bias = random_tensor(1, cols, rng);
        Graph g;
        auto ln_loss = [&](bool with_grad) {
            g.clear();
            Var y = g.layer_norm_rows(g.param(x), g.param(gain), g.param(bias), 1e-6);
            Var l = g.mean_all(g.mul(y, y));
            if (with_grad) g.backward(l);
            return g.scalar_value(l);
        };
        CHECK(finite_difference_check(ln_loss, {&x, &gain, &bias}, 1e-5).max_rel_error < 1e-4);

        // cross entropy
        Tensor2D logits = random_tensor(rows, cols, rng);
        std::vector<int> targets;
        for (int r = 0; r < rows; ++r) targets.push_back(rng.uniform_int(cols));
        Graph g2;
        auto ce_loss = [&](bool with_grad) {
            g2.clear();
            Var l = g2.cross_entropy(g2.param(logits), targets);
            if (with_grad) g2.backward(l);
            return g2.scalar_value(l);
        };
        CHECK(finite_difference_check(ce_loss, {&logits}, 1e-5).max_rel_error < 1e-4);

        // bce with logits
        Tensor2D z = random_tensor(rows, cols, rng);
        Tensor2D bits(rows, cols);
        for (double& v : bits.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        Graph g3;
        auto bce_loss = [&](bool with_grad) {
            g3.clear();
            Var l = g3.bce_with_logits(g3.param(z), bits);
            if (with_grad) g3.backward(l);
            return g3.scalar_value(l);
        };
        CHECK(finite_difference_check(bce_loss, {&z}, 1e-5).max_rel_error < 1e-4);
    }
}

TEST_CASE("concat and slice route gradients to the right places") {
    Rng rng(5);
    Tensor2D a = random_tensor(2, 3, rng);
    Tensor2D b = random_tensor(1, 3, rng);
    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        Var cat = g.concat_rows({g.param(a), g.param(b)});
        Var sliced = g.slice_rows(cat, 1, 3);
        Var cols = g.concat_cols({sliced, g.scale(sliced, 2.0)});
        Var l = g.mean_all(g.mul(cols, cols));
        if (with_grad) g.backward(l);
        return g.scalar_value(l);
    };
    CHECK(finite_difference_check(loss, {&a, &b}, 1e-5).max_rel_error < 1e-4);
}

TEST_CASE("non-finite values abort with the op name") {
    Graph g;
    Var huge = g.input(Tensor2D::from_rows({{1e308, 1e308}}));
    try {
        g.add(huge, huge);
        FAIL("expected NumericsError");
    } catch (const NumericsError& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
}

TEST_CASE("forward pass is bitwise deterministic") {
    Rng rng(9);
    Tensor2D x = random_tensor(6, 6, rng, false);
    auto run = [&]() {
        Graph g;
        Var y = g.softmax_rows(g.matmul(g.input(x), g.transpose(g.input(x))));
        return g.value(y).data;
    };
    CHECK(run() == run());
}

TEST_CASE("dropout scales kept entries and zeroes the rest") {
    Rng rng(13);
    Tensor2D x(1, 1000, 1.0);
    Graph g;
    const Tensor2D& y = g.value(g.dropout(g.input(x), 0.25, rng));
    int kept = 0;
    for (double v : y.data) {
        if (v != 0.0) {
            CHECK(v == doctest::Approx(1.0 / 0.75));
            ++kept;
        }
    }
    CHECK(kept > 650);
    CHECK(kept < 850);
}

TEST_CASE("graph reuse after clear produces identical values") {
    Rng rng(21);
    Tensor2D x = random_tensor(4, 4, rng, false);
    Graph g;
    Var y1 = g.softmax_rows(g.matmul(g.input(x), g.input(x)));
    const std::vector<double> first = g.value(y1).data;
    g.clear();
    Var y2 = g.softmax_rows(g.matmul(g.input(x), g.input(x)));
    CHECK(g.value(y2).data == first);
}

} // TEST_SUITE
