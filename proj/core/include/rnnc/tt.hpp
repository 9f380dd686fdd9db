#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rnnc/matrix.hpp"

namespace rnnc {

// ============================================================
// Tensor-Train matrix representation
// ============================================================
//
// A rows x cols matrix is reshaped into a d-dimensional tensor by
// factorizing rows = prod(row_modes) and cols = prod(col_modes), fusing
// each (row digit, col digit) pair into one index j_k = i_k * m_k + c_k.
// The tensor is stored as a chain of cores; core k is an array of s_k
// matrices of shape ranks[k] x ranks[k+1], where s_k = n_k * m_k, and the
// matrix entry at (row, col) is the product G_1[j_1] G_2[j_2] ... G_d[j_d],
// a 1x1 result because the boundary ranks are pinned to 1.
//
// The fused-index convention above (row digit major within each core, row
// and column digits decomposed most-significant first) is load-bearing:
// tt_from_dense, tt_to_dense, tt_element, and tt_matvec all assume it.

struct TTMatrix {
    std::vector<std::size_t> row_modes;  // n_1..n_d, product == rows
    std::vector<std::size_t> col_modes;  // m_1..m_d, product == cols
    std::vector<std::size_t> ranks;      // r_0..r_d with r_0 == r_d == 1
    // cores[k] holds s_k slices, slice j laid out row-major as
    // cores[k][(j * r_k + a) * r_{k+1} + b].
    std::vector<std::vector<double>> cores;

    std::size_t dims() const { return row_modes.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    std::size_t max_rank() const;
};

// Truncation policy for tt_from_dense. Exactly one of max_ranks (hard caps
// on the internal ranks, one entry broadcast or one per bond) and epsilon
// (relative Frobenius accuracy) must be set.
struct TTConfig {
    std::vector<std::size_t> row_modes;
    std::vector<std::size_t> col_modes;
    std::vector<std::size_t> max_ranks;
    std::optional<double> epsilon;
};

// Splits dim into d factors whose product is dim, as balanced as greedy
// assembly allows: primes are assigned largest-first to the currently
// smallest mode. Result sorted descending. Factors of 1 appear when dim
// has fewer than d prime factors; callers that care should warn.
std::vector<std::size_t> factorize_modes(std::size_t dim, std::size_t d);

// TT-SVD. In accuracy mode each internal SVD discards a singular tail of
// norm at most epsilon * ||A||_F / sqrt(d - 1), which bounds the total
// reconstruction error by epsilon * ||A||_F. In rank mode the caps are
// applied directly.
TTMatrix tt_from_dense(const DenseMatrix& a, const TTConfig& config);

DenseMatrix tt_to_dense(const TTMatrix& tt);

// Tensor element by fused multi-index, one entry per core.
double tt_element(const TTMatrix& tt, const std::vector<std::size_t>& index);

// y = A * x without materializing A: sequential contraction of the cores
// against x reshaped over the column modes.
std::vector<double> tt_matvec(const TTMatrix& tt, std::span<const double> x);

// y = A^T * g under the same convention.
std::vector<double> tt_matvec_transpose(const TTMatrix& tt, std::span<const double> g);

// Reverse-mode companion of tt_matvec: given gy = dL/dy, accumulates
// dL/d(core k) into grad_cores[k] (which must view storage sized to match
// the cores) and returns dL/dx. Works directly on the cores; no
// densification.
std::vector<double> tt_matvec_backward(const TTMatrix& tt, std::span<const double> x,
                                       std::span<const double> gy,
                                       std::vector<std::span<double>>& grad_cores);

std::size_t tt_param_count(const TTMatrix& tt);

// Full rank vector r_0..r_d for a fresh TT matrix with the given caps
// (broadcast when a single cap is given): each internal rank is the cap
// clamped to what the fused modes can support on either side.
std::vector<std::size_t> tt_bounded_ranks(const std::vector<std::size_t>& row_modes,
                                          const std::vector<std::size_t>& col_modes,
                                          const std::vector<std::size_t>& max_ranks);

// TT matrix with the given modes and exact ranks; cores are zero-filled
// for the caller to initialize.
TTMatrix tt_zeros(const std::vector<std::size_t>& row_modes,
                  const std::vector<std::size_t>& col_modes,
                  const std::vector<std::size_t>& ranks);

}  // namespace rnnc
