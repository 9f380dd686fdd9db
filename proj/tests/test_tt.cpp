// ==========================================================================
// Tensor-Train construction, contraction, and accounting. Oracles: the
// original dense matrix for round trips, densify-and-multiply for matvec,
// a hand reshape plus single SVD for the d=2 equivalence, and central
// finite differences for the core gradients.
// ==========================================================================
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "rnnc/errors.hpp"
#include "rnnc/matrix.hpp"
#include "rnnc/svd.hpp"
#include "rnnc/tt.hpp"
#include "testutil.hpp"

using namespace rnnc;
using testutil::random_matrix;

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

TTConfig eps_config(std::vector<std::size_t> rm, std::vector<std::size_t> cm, double eps) {
    TTConfig c;
    c.row_modes = std::move(rm);
    c.col_modes = std::move(cm);
    c.epsilon = eps;
    return c;
}

TTConfig rank_config(std::vector<std::size_t> rm, std::vector<std::size_t> cm,
                     std::vector<std::size_t> caps) {
    TTConfig c;
    c.row_modes = std::move(rm);
    c.col_modes = std::move(cm);
    c.max_ranks = std::move(caps);
    return c;
}

// Random TT with the given modes and rank caps, cores filled uniformly.
TTMatrix random_tt(const std::vector<std::size_t>& rm, const std::vector<std::size_t>& cm,
                   std::size_t cap, std::mt19937_64& rng) {
    TTMatrix tt = tt_zeros(rm, cm, tt_bounded_ranks(rm, cm, {cap}));
    for (auto& core : tt.cores) testutil::fill_uniform(core, rng);
    return tt;
}

}  // namespace

// --------------------------------------------------------------------------
// factorize_modes
// --------------------------------------------------------------------------

TEST_CASE("factorize_modes: 600 into 4 balanced factors") {
    const std::vector<std::size_t> modes = factorize_modes(600, 4);
    CHECK(modes == std::vector<std::size_t>{6, 5, 5, 4});
}

TEST_CASE("factorize_modes: 1024 into 4 balanced factors") {
    const std::vector<std::size_t> modes = factorize_modes(1024, 4);
    CHECK(modes == std::vector<std::size_t>{8, 8, 4, 4});
}

TEST_CASE("factorize_modes: single mode returns the dimension itself") {
    CHECK(factorize_modes(37, 1) == std::vector<std::size_t>{37});
}

TEST_CASE("factorize_modes: primes pad with unit factors") {
    CHECK(factorize_modes(7, 2) == std::vector<std::size_t>{7, 1});
}

TEST_CASE("factorize_modes: product always recovers the dimension") {
    for (std::size_t dim : {12u, 60u, 64u, 100u, 210u, 600u}) {
        for (std::size_t d : {2u, 3u, 4u}) {
            CHECK(product(factorize_modes(dim, d)) == dim);
        }
    }
}

// --------------------------------------------------------------------------
// tt_from_dense / tt_to_dense round trips
// --------------------------------------------------------------------------

TEST_CASE("tt round trip: a digit-separable matrix collapses to unit ranks") {
    // A(i, c) = prod_k u_k(i_k) * w_k(c_k) factors across every fused index,
    // which is exactly the class of matrices with all TT ranks equal to 1.
    // (A generic rank-1 outer product is NOT in this class: the fused
    // reshaping interleaves row and column digits.)
    std::mt19937_64 rng(21);
    const std::vector<std::size_t> rm = {3, 2, 2};
    const std::vector<std::size_t> cm = {2, 2, 2};
    std::vector<std::vector<double>> u(3), w(3);
    for (std::size_t k = 0; k < 3; ++k) {
        u[k].resize(rm[k]);
        w[k].resize(cm[k]);
        testutil::fill_uniform(u[k], rng);
        testutil::fill_uniform(w[k], rng);
        for (double& x : u[k]) x += 2.0;  // keep factors away from zero
        for (double& x : w[k]) x += 2.0;
    }
    DenseMatrix a(12, 8);
    for (std::size_t i = 0; i < 12; ++i) {
        const std::size_t i1 = i / 4, i2 = (i / 2) % 2, i3 = i % 2;
        for (std::size_t c = 0; c < 8; ++c) {
            const std::size_t c1 = c / 4, c2 = (c / 2) % 2, c3 = c % 2;
            a(i, c) = u[0][i1] * u[1][i2] * u[2][i3] * w[0][c1] * w[1][c2] * w[2][c3];
        }
    }
    const TTMatrix tt = tt_from_dense(a, eps_config(rm, cm, 1e-10));
    for (std::size_t r : tt.ranks) CHECK(r == 1);
    CHECK(relative_frobenius_error(tt_to_dense(tt), a) < 1e-9);
}

TEST_CASE("tt round trip: unbounded ranks reproduce the matrix") {
    std::mt19937_64 rng(22);
    const struct {
        std::vector<std::size_t> rm, cm;
    } cases[] = {
        {{4, 4}, {4, 4}},
        {{3, 2, 2}, {2, 3, 2}},
        {{6, 5, 5, 4}, {2, 2, 2, 2}},
    };
    for (const auto& c : cases) {
        const DenseMatrix a = random_matrix(product(c.rm), product(c.cm), rng);
        const TTMatrix tt = tt_from_dense(a, rank_config(c.rm, c.cm, {1000}));
        CHECK(tt.ranks.front() == 1);
        CHECK(tt.ranks.back() == 1);
        CHECK(tt.rows() == a.rows);
        CHECK(tt.cols() == a.cols);
        CHECK(relative_frobenius_error(tt_to_dense(tt), a) < 1e-9);
    }
}

TEST_CASE("tt accuracy mode: relative Frobenius bound holds") {
    std::mt19937_64 rng(23);
    const DenseMatrix a = random_matrix(24, 24, rng);
    const double norm_a = frobenius_norm(a);
    for (double eps : {1e-2, 1e-4, 1e-8}) {
        const TTMatrix tt = tt_from_dense(a, eps_config({4, 3, 2}, {4, 3, 2}, eps));
        DenseMatrix diff = tt_to_dense(tt);
        for (std::size_t i = 0; i < diff.size(); ++i) diff.data[i] -= a.data[i];
        CHECK(frobenius_norm(diff) <= eps * norm_a);
    }
}

TEST_CASE("tt accuracy mode: loosening epsilon never raises a rank") {
    std::mt19937_64 rng(24);
    const DenseMatrix a = random_matrix(24, 24, rng);
    const TTMatrix tight = tt_from_dense(a, eps_config({4, 3, 2}, {4, 3, 2}, 1e-8));
    const TTMatrix mid = tt_from_dense(a, eps_config({4, 3, 2}, {4, 3, 2}, 1e-4));
    const TTMatrix loose = tt_from_dense(a, eps_config({4, 3, 2}, {4, 3, 2}, 1e-2));
    for (std::size_t i = 0; i < tight.ranks.size(); ++i) {
        CHECK(loose.ranks[i] <= mid.ranks[i]);
        CHECK(mid.ranks[i] <= tight.ranks[i]);
    }
}

TEST_CASE("tt rank mode with d=2 matches the optimal single-SVD tail") {
    std::mt19937_64 rng(25);
    const std::size_t n1 = 6, n2 = 6, m1 = 6, m2 = 6;
    const DenseMatrix a = random_matrix(n1 * n2, m1 * m2, rng);
    const std::size_t cap = 3;

    const TTMatrix tt = tt_from_dense(a, rank_config({n1, n2}, {m1, m2}, {cap}));
    DenseMatrix diff = tt_to_dense(tt);
    for (std::size_t i = 0; i < diff.size(); ++i) diff.data[i] -= a.data[i];
    const double tt_err = frobenius_norm(diff);

    // Oracle: a d=2 TT is a single SVD of the fused reshape
    // B(i1*m1 + c1, i2*m2 + c2) = A(i1*n2 + i2, c1*m2 + c2), so the error
    // must equal the optimal rank-3 tail of B.
    DenseMatrix b(n1 * m1, n2 * m2);
    for (std::size_t i1 = 0; i1 < n1; ++i1) {
        for (std::size_t i2 = 0; i2 < n2; ++i2) {
            for (std::size_t c1 = 0; c1 < m1; ++c1) {
                for (std::size_t c2 = 0; c2 < m2; ++c2) {
                    b(i1 * m1 + c1, i2 * m2 + c2) = a(i1 * n2 + i2, c1 * m2 + c2);
                }
            }
        }
    }
    const SvdResult f = truncated_svd(b, std::min(b.rows, b.cols));
    double tail2 = 0.0;
    for (std::size_t i = cap; i < f.s.size(); ++i) tail2 += f.s[i] * f.s[i];
    CHECK(tt_err == doctest::Approx(std::sqrt(tail2)).epsilon(1e-8));
}

TEST_CASE("tt_from_dense: mode mismatch is a shape error") {
    const DenseMatrix a(12, 8);
    CHECK_THROWS_AS(tt_from_dense(a, rank_config({3, 2}, {2, 2, 2}, {4})), ShapeError);
    CHECK_THROWS_AS(tt_from_dense(a, rank_config({3, 2, 2}, {2, 2}, {4})), ShapeError);
}

TEST_CASE("tt_from_dense: truncation policy must be exactly one of caps and epsilon") {
    const DenseMatrix a(4, 4);
    TTConfig both = rank_config({2, 2}, {2, 2}, {2});
    both.epsilon = 1e-4;
    CHECK_THROWS_AS(tt_from_dense(a, both), ArgumentError);
    TTConfig neither = rank_config({2, 2}, {2, 2}, {});
    CHECK_THROWS_AS(tt_from_dense(a, neither), ArgumentError);
}

// --------------------------------------------------------------------------
// tt_element
// --------------------------------------------------------------------------

TEST_CASE("tt_element: d=1 is direct lookup") {
    std::mt19937_64 rng(26);
    const DenseMatrix a = random_matrix(5, 3, rng);
    const TTMatrix tt = tt_from_dense(a, rank_config({5}, {3}, {1}));
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(tt_element(tt, {i * 3 + j}) == doctest::Approx(a(i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("tt_element: agrees with tt_to_dense on random fused indices") {
    std::mt19937_64 rng(27);
    const TTMatrix tt = random_tt({3, 4, 2}, {2, 3, 2}, 3, rng);
    const DenseMatrix dense = tt_to_dense(tt);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::size_t> index(tt.dims());
        std::size_t row = 0, col = 0;
        for (std::size_t k = 0; k < tt.dims(); ++k) {
            const std::size_t ik = rng() % tt.row_modes[k];
            const std::size_t ck = rng() % tt.col_modes[k];
            index[k] = ik * tt.col_modes[k] + ck;
            row = row * tt.row_modes[k] + ik;
            col = col * tt.col_modes[k] + ck;
        }
        CHECK(tt_element(tt, index) == doctest::Approx(dense(row, col)).epsilon(1e-12));
    }
}

TEST_CASE("tt_element: zero cores give zero everywhere") {
    const TTMatrix tt = tt_zeros({2, 2}, {2, 2}, {1, 2, 1});
    CHECK(tt_element(tt, {0, 0}) == 0.0);
    CHECK(tt_element(tt, {3, 3}) == 0.0);
}

TEST_CASE("tt_element: out-of-bound index is an index error") {
    const TTMatrix tt = tt_zeros({2, 2}, {2, 2}, {1, 2, 1});
    CHECK_THROWS_AS(tt_element(tt, {4, 0}), IndexError);
    CHECK_THROWS_AS(tt_element(tt, {0}), IndexError);
}

// --------------------------------------------------------------------------
// tt_matvec and companions
// --------------------------------------------------------------------------

TEST_CASE("tt_matvec: zero vector maps to zero") {
    std::mt19937_64 rng(28);
    const TTMatrix tt = random_tt({3, 2}, {2, 2}, 2, rng);
    const std::vector<double> y = tt_matvec(tt, std::vector<double>(4, 0.0));
    for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("tt_matvec: separable rank-1 case is (v . x) u") {
    std::mt19937_64 rng(29);
    std::vector<double> u(12), v(8), x(8);
    testutil::fill_uniform(u, rng);
    testutil::fill_uniform(v, rng);
    testutil::fill_uniform(x, rng);
    DenseMatrix a(12, 8);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 8; ++j) a(i, j) = u[i] * v[j];
    }
    const TTMatrix tt = tt_from_dense(a, eps_config({3, 2, 2}, {2, 2, 2}, 1e-10));
    const std::vector<double> y = tt_matvec(tt, x);
    const double vx = std::inner_product(v.begin(), v.end(), x.begin(), 0.0);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(y[i] == doctest::Approx(vx * u[i]).epsilon(1e-10));
    }
}

TEST_CASE("tt_matvec: random four-core TT matches the densified oracle") {
    std::mt19937_64 rng(30);
    const std::vector<std::size_t> rm = {5, 5, 4, 6}, cm = {5, 5, 4, 6};
    const TTMatrix tt = random_tt(rm, cm, 8, rng);
    const DenseMatrix dense = tt_to_dense(tt);
    std::vector<double> x(dense.cols);
    testutil::fill_uniform(x, rng);

    const std::vector<double> y = tt_matvec(tt, x);
    std::vector<double> y_oracle(dense.rows, 0.0);
    matvec_accum(dense, x, y_oracle);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += (y[i] - y_oracle[i]) * (y[i] - y_oracle[i]);
        den += y_oracle[i] * y_oracle[i];
    }
    CHECK(std::sqrt(num) <= 1e-8 * std::sqrt(den));
}

TEST_CASE("tt_matvec_transpose: matches the densified transpose product") {
    std::mt19937_64 rng(31);
    const TTMatrix tt = random_tt({3, 4}, {2, 5}, 4, rng);
    const DenseMatrix dense = tt_to_dense(tt);
    std::vector<double> g(dense.rows);
    testutil::fill_uniform(g, rng);

    const std::vector<double> x = tt_matvec_transpose(tt, g);
    std::vector<double> x_oracle(dense.cols, 0.0);
    matvec_t_accum(dense, g, x_oracle);
    REQUIRE(x.size() == x_oracle.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x[i] == doctest::Approx(x_oracle[i]).epsilon(1e-10));
    }
}

TEST_CASE("tt_matvec: length mismatch is a shape error") {
    std::mt19937_64 rng(32);
    const TTMatrix tt = random_tt({3, 2}, {2, 2}, 2, rng);
    CHECK_THROWS_AS(tt_matvec(tt, std::vector<double>(5, 0.0)), ShapeError);
}

TEST_CASE("tt_matvec_backward: core gradients match finite differences") {
    std::mt19937_64 rng(33);
    TTMatrix tt = random_tt({2, 2}, {2, 2}, 2, rng);
    std::vector<double> x(4), gy(4);
    testutil::fill_uniform(x, rng);
    testutil::fill_uniform(gy, rng);

    // Scalar objective L = gy . (A x); dL/dcore via central differences.
    auto objective = [&]() {
        const std::vector<double> y = tt_matvec(tt, x);
        return std::inner_product(gy.begin(), gy.end(), y.begin(), 0.0);
    };

    std::vector<std::vector<double>> grad_store;
    std::vector<std::span<double>> grad_spans;
    for (const auto& core : tt.cores) grad_store.emplace_back(core.size(), 0.0);
    for (auto& g : grad_store) grad_spans.emplace_back(g);

    const std::vector<double> dx = tt_matvec_backward(tt, x, gy, grad_spans);

    // dx must be A^T gy.
    const std::vector<double> dx_oracle = tt_matvec_transpose(tt, gy);
    for (std::size_t i = 0; i < dx.size(); ++i) {
        CHECK(dx[i] == doctest::Approx(dx_oracle[i]).epsilon(1e-10));
    }

    const double h = 1e-6;
    for (std::size_t k = 0; k < tt.cores.size(); ++k) {
        for (std::size_t j = 0; j < tt.cores[k].size(); ++j) {
            const double saved = tt.cores[k][j];
            tt.cores[k][j] = saved + h;
            const double up = objective();
            tt.cores[k][j] = saved - h;
            const double down = objective();
            tt.cores[k][j] = saved;
            const double numeric = (up - down) / (2.0 * h);
            CHECK(grad_store[k][j] == doctest::Approx(numeric).epsilon(1e-6));
        }
    }
}

// --------------------------------------------------------------------------
// Accounting
// --------------------------------------------------------------------------

TEST_CASE("tt_param_count: hand count for the smallest nontrivial TT") {
    const TTMatrix tt = tt_zeros({2, 2}, {2, 2}, {1, 1, 1});
    CHECK(tt_param_count(tt) == 8);
}

TEST_CASE("tt_param_count: matches the rank formula on random shapes") {
    std::mt19937_64 rng(34);
    const TTMatrix tt = random_tt({3, 4, 2}, {2, 3, 2}, 5, rng);
    std::size_t expected = 0;
    for (std::size_t k = 0; k < tt.dims(); ++k) {
        expected += tt.ranks[k] * tt.row_modes[k] * tt.col_modes[k] * tt.ranks[k + 1];
    }
    CHECK(tt_param_count(tt) == expected);
}

TEST_CASE("tt of a generic matrix with unbounded ranks is not smaller than dense") {
    std::mt19937_64 rng(35);
    const DenseMatrix a = random_matrix(16, 16, rng);
    const TTMatrix tt = tt_from_dense(a, rank_config({4, 4}, {4, 4}, {1000}));
    CHECK(tt_param_count(tt) >= a.size());
}

TEST_CASE("tt_bounded_ranks: caps clamp to what the modes support") {
    const std::vector<std::size_t> ranks = tt_bounded_ranks({4, 4}, {4, 4}, {1000});
    REQUIRE(ranks.size() == 3);
    CHECK(ranks[0] == 1);
    CHECK(ranks[1] == 16);
    CHECK(ranks[2] == 1);
    const std::vector<std::size_t> capped = tt_bounded_ranks({4, 4}, {4, 4}, {3});
    CHECK(capped[1] == 3);
}
