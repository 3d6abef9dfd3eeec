#include "doctest.h"

#include "cmpt/gradcheck.hpp"
#include "cmpt/graph.hpp"

using namespace cmpt;

TEST_SUITE("gradcheck") {

TEST_CASE("quadratic analytic vs numeric") {
    Tensor2D x(1, 1, 3.0);
    x.requires_grad = true;
    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        Var xv = g.param(x);
        Var l = g.sum_all(g.mul(xv, xv));
        if (with_grad) g.backward(l);
        return g.scalar_value(l);
    };
    auto report = finite_difference_check(loss, {&x}, 1e-5);
    CHECK(report.analytic == doctest::Approx(6.0));
    CHECK(report.numeric == doctest::Approx(6.0).epsilon(1e-9));
    CHECK(report.max_rel_error < 1e-9);
}

TEST_CASE("constant function has zero gradients both ways") {
    Tensor2D x(1, 2, 1.5);
    x.requires_grad = true;
    Graph g;
    auto loss = [&](bool with_grad) {
        g.clear();
        g.param(x);
        Var l = g.input(Tensor2D(1, 1, 4.0));
        if (with_grad) g.backward(l);
        return g.scalar_value(l);
    };
    auto report = finite_difference_check(loss, {&x}, 1e-5);
    CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("non-deterministic function is detected") {
    Tensor2D x(1, 1, 1.0);
    x.requires_grad = true;
    int calls = 0;
    auto loss = [&](bool) {
        ++calls;
        return static_cast<double>(calls);
    };
    CHECK_THROWS_AS(finite_difference_check(loss, {&x}, 1e-5), NondeterministicFunctionError);
}

TEST_CASE("eps outside the sane range is rejected") {
    Tensor2D x(1, 1, 1.0);
    auto loss = [&](bool) { return 0.0; };
    CHECK_THROWS_AS(finite_difference_check(loss, {&x}, 1e-2), DimensionError);
    CHECK_THROWS_AS(finite_difference_check(loss, {&x}, 1e-9), DimensionError);
}

} // TEST_SUITE
