#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "cmpt/errors.hpp"

namespace cmpt {

// Dense row-major matrix of 64-bit reals; the only value type the graph engine
// operates on. `grad` stays empty until something accumulates into it.
struct Tensor2D {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor2D() = default;
    Tensor2D(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> values);
    static Tensor2D row_vector(std::vector<double> values);

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor2D& o) const { return rows == o.rows && cols == o.cols; }

    void ensure_grad();
    void zero_grad();
    double grad_norm() const;
    bool all_finite() const;
};

namespace detail {

// C = A*B (ar x ac times ac x bc), fixed i-k-j order so summation is
// left-to-right and bitwise reproducible.
void matmul(const double* a, int ar, int ac, const double* b, int bc, double* c);
// C += A*B^T where A is ar x k, B is br x k; yields ar x br.
void matmul_acc_abt(const double* a, int ar, int k, const double* b, int br, double* c);
// C += A^T*B where A is k x ac, B is k x bc; yields ac x bc.
void matmul_acc_atb(const double* a, int k, int ac, const double* b, int bc, double* c);

} // namespace detail

} // namespace cmpt
