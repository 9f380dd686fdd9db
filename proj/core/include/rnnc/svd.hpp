#pragma once

#include <vector>

#include "rnnc/matrix.hpp"

namespace rnnc {

// A ≈ U · diag(S) · Vᵀ with U (rows×r), S non-increasing and non-negative,
// V (cols×r). Columns of U and V are orthonormal; a U column belonging to an
// exactly-zero singular value is left zero.
struct SvdResult {
    DenseMatrix u;
    std::vector<double> s;
    DenseMatrix v;
};

// Best rank-r approximation via one-sided Jacobi rotations applied on the
// smaller Gram side. Convergence tolerance 1e-12 on the normalized
// off-diagonal inner products, at most 60 sweeps. Ties between equal singular
// values keep the stable order produced by the sweep; callers must not assume
// a particular basis for degenerate subspaces.
SvdResult truncated_svd(const DenseMatrix& a, std::size_t r);

// U · diag(S) · Vᵀ.
DenseMatrix svd_reconstruct(const SvdResult& f);

}  // namespace rnnc
