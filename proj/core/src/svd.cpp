#include "rnnc/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rnnc/errors.hpp"

namespace rnnc {

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kMaxSweeps = 60;

// One-sided Jacobi on a tall matrix (rows >= cols): orthogonalizes the
// columns of `b` in place while accumulating the rotations into `v`.
// On exit, column j of b equals u_j * sigma_j.
void jacobi_orthogonalize(DenseMatrix& b, DenseMatrix& v) {
    const std::size_t n = b.cols;
    const std::size_t m = b.rows;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p);
                    const double bq = b(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p);
                    const double bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
}

}  // namespace

SvdResult truncated_svd(const DenseMatrix& a, std::size_t r) {
    const std::size_t mindim = std::min(a.rows, a.cols);
    if (r == 0 || r > mindim) {
        throw RankError("truncated_svd rank " + std::to_string(r) + " outside [1, " +
                        std::to_string(mindim) + "] for " + std::to_string(a.rows) + "x" +
                        std::to_string(a.cols) + " input");
    }

    // Rotate on the side with fewer columns; transpose back at the end.
    const bool flipped = a.rows < a.cols;
    DenseMatrix b = flipped ? transpose(a) : a;
    DenseMatrix v = DenseMatrix::identity(b.cols);
    jacobi_orthogonalize(b, v);

    const std::size_t n = b.cols;
    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < b.rows; ++i) acc += b(i, j) * b(i, j);
        sigma[j] = std::sqrt(acc);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult out;
    out.u = DenseMatrix(b.rows, r);
    out.v = DenseMatrix(v.rows, r);
    out.s.resize(r);
    for (std::size_t j = 0; j < r; ++j) {
        const std::size_t src = order[j];
        const double sj = sigma[src];
        out.s[j] = sj;
        if (sj > 0.0) {
            for (std::size_t i = 0; i < b.rows; ++i) out.u(i, j) = b(i, src) / sj;
        }
        for (std::size_t i = 0; i < v.rows; ++i) out.v(i, j) = v(i, src);
    }

    if (flipped) std::swap(out.u, out.v);
    return out;
}

DenseMatrix svd_reconstruct(const SvdResult& f) {
    DenseMatrix us = f.u;
    for (std::size_t i = 0; i < us.rows; ++i)
        for (std::size_t j = 0; j < us.cols; ++j) us(i, j) *= f.s[j];
    return matmul_nt(us, f.v);
}

}  // namespace rnnc
