#include "rnnc/matrix.hpp"

#include <cmath>
#include <string>

#include "rnnc/errors.hpp"

namespace rnnc {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(rows, cols));
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul shape mismatch: " + shape_str(a.rows, a.cols) + " * " +
                         shape_str(b.rows, b.cols));
    }
    DenseMatrix c(a.rows, b.cols);
    // ikj order: streams through b and c rows contiguously.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* crow = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.cols) {
        throw ShapeError("matmul_nt shape mismatch: " + shape_str(a.rows, a.cols) + " * " +
                         shape_str(b.rows, b.cols) + "^T");
    }
    DenseMatrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* crow = c.data.data() + i * c.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows) {
        throw ShapeError("matmul_tn shape mismatch: " + shape_str(a.rows, a.cols) + "^T * " +
                         shape_str(b.rows, b.cols));
    }
    DenseMatrix c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + k * a.cols;
        const double* brow = b.data.data() + k * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = c.data.data() + i * c.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

double frobenius_norm(const DenseMatrix& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return std::sqrt(acc);
}

double relative_frobenius_error(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeError("relative_frobenius_error shape mismatch: " + shape_str(a.rows, a.cols) +
                         " vs " + shape_str(b.rows, b.cols));
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        diff += d * d;
    }
    const double ref = frobenius_norm(b);
    return std::sqrt(diff) / (ref > 0.0 ? ref : 1.0);
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const DenseMatrix& a) { return all_finite(std::span<const double>(a.data)); }

void matvec_accum(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.cols || y.size() != a.rows) {
        throw ShapeError("matvec shape mismatch: " + shape_str(a.rows, a.cols) + " * vec[" +
                         std::to_string(x.size()) + "] -> vec[" + std::to_string(y.size()) + "]");
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
        y[i] += acc;
    }
}

void matvec_t_accum(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    if (x.size() != a.rows || y.size() != a.cols) {
        throw ShapeError("matvec_t shape mismatch: " + shape_str(a.rows, a.cols) + "^T * vec[" +
                         std::to_string(x.size()) + "] -> vec[" + std::to_string(y.size()) + "]");
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += xi * arow[j];
    }
}

void outer_accum(DenseMatrix& a, std::span<const double> x, std::span<const double> y) {
    if (x.size() != a.rows || y.size() != a.cols) {
        throw ShapeError("outer_accum shape mismatch: vec[" + std::to_string(x.size()) +
                         "] x vec[" + std::to_string(y.size()) + "] -> " +
                         shape_str(a.rows, a.cols));
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < a.cols; ++j) arow[j] += xi * y[j];
    }
}

}  // namespace rnnc
