#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rnnc {

// Row-major dense matrix of 64-bit reals. All internal arithmetic runs in
// double; 32-bit views exist only at the serialization boundary.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    DenseMatrix(std::size_t r, std::size_t c, std::vector<double> d);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    std::size_t size() const { return data.size(); }

    static DenseMatrix identity(std::size_t n);
};

// Standard product. Single fixed reduction order, so results are
// reproducible for a given build.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// a · bᵀ and aᵀ · b. Used heavily by the recurrent kernels and their
// backward passes; same determinism contract as matmul.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);

// √(Σ (a-b)²) / max(‖b‖, tiny); convenience for tests and truncation checks.
double relative_frobenius_error(const DenseMatrix& a, const DenseMatrix& b);

bool all_finite(const DenseMatrix& a);
bool all_finite(std::span<const double> v);

// y += A·x (lengths must match A's shape).
void matvec_accum(const DenseMatrix& a, std::span<const double> x, std::span<double> y);
// y += Aᵀ·x.
void matvec_t_accum(const DenseMatrix& a, std::span<const double> x, std::span<double> y);
// A += x·yᵀ (outer product accumulate).
void outer_accum(DenseMatrix& a, std::span<const double> x, std::span<const double> y);

}  // namespace rnnc
