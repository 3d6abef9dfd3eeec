#include "cmpt/tensor.hpp"

#include <cmath>

namespace cmpt {

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> values) {
    Tensor2D t;
    t.rows = static_cast<int>(values.size());
    t.cols = t.rows > 0 ? static_cast<int>(values.begin()->size()) : 0;
    t.data.reserve(static_cast<std::size_t>(t.rows) * t.cols);
    for (const auto& r : values) {
        if (static_cast<int>(r.size()) != t.cols) {
            throw DimensionError("from_rows: ragged row lengths");
        }
        t.data.insert(t.data.end(), r.begin(), r.end());
    }
    return t;
}

Tensor2D Tensor2D::row_vector(std::vector<double> values) {
    Tensor2D t;
    t.rows = 1;
    t.cols = static_cast<int>(values.size());
    t.data = std::move(values);
    return t;
}

void Tensor2D::ensure_grad() {
    if (grad.size() != data.size()) {
        grad.assign(data.size(), 0.0);
    }
}

void Tensor2D::zero_grad() {
    grad.assign(data.size(), 0.0);
}

double Tensor2D::grad_norm() const {
    double s = 0.0;
    for (double g : grad) s += g * g;
    return std::sqrt(s);
}

bool Tensor2D::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace detail {

void matmul(const double* a, int ar, int ac, const double* b, int bc, double* c) {
    for (int i = 0; i < ar; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * bc;
        for (int j = 0; j < bc; ++j) crow[j] = 0.0;
        const double* arow = a + static_cast<std::size_t>(i) * ac;
        for (int k = 0; k < ac; ++k) {
            const double aik = arow[k];
            const double* brow = b + static_cast<std::size_t>(k) * bc;
            for (int j = 0; j < bc; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

void matmul_acc_abt(const double* a, int ar, int k, const double* b, int br, double* c) {
    for (int i = 0; i < ar; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * br;
        for (int j = 0; j < br; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
            crow[j] += acc;
        }
    }
}

void matmul_acc_atb(const double* a, int k, int ac, const double* b, int bc, double* c) {
    for (int t = 0; t < k; ++t) {
        const double* arow = a + static_cast<std::size_t>(t) * ac;
        const double* brow = b + static_cast<std::size_t>(t) * bc;
        for (int i = 0; i < ac; ++i) {
            const double ati = arow[i];
            double* crow = c + static_cast<std::size_t>(i) * bc;
            for (int j = 0; j < bc; ++j) {
                crow[j] += ati * brow[j];
            }
        }
    }
}

} // namespace detail

} // namespace cmpt
