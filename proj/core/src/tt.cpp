#include "rnnc/tt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rnnc/errors.hpp"
#include "rnnc/svd.hpp"

namespace rnnc {

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

// Digits of a row-major flat index, most significant first.
void decompose(std::size_t flat, const std::vector<std::size_t>& radices,
               std::vector<std::size_t>& digits) {
    digits.resize(radices.size());
    for (std::size_t k = radices.size(); k-- > 0;) {
        digits[k] = flat % radices[k];
        flat /= radices[k];
    }
}

void check_tt(const TTMatrix& tt) {
    const std::size_t d = tt.dims();
    if (d == 0) throw ArgumentError("TT matrix has no cores");
    if (tt.col_modes.size() != d || tt.cores.size() != d || tt.ranks.size() != d + 1) {
        throw ShapeError("TT matrix mode/rank/core counts are inconsistent");
    }
    if (tt.ranks.front() != 1 || tt.ranks.back() != 1) {
        throw RankError("TT boundary ranks must be 1, got " + std::to_string(tt.ranks.front()) +
                        " and " + std::to_string(tt.ranks.back()));
    }
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t want = tt.row_modes[k] * tt.col_modes[k] * tt.ranks[k] * tt.ranks[k + 1];
        if (tt.cores[k].size() != want) {
            throw ShapeError("TT core " + std::to_string(k) + " holds " +
                             std::to_string(tt.cores[k].size()) + " entries, expected " +
                             std::to_string(want));
        }
    }
}

}  // namespace

std::size_t TTMatrix::rows() const { return product(row_modes); }
std::size_t TTMatrix::cols() const { return product(col_modes); }

std::size_t TTMatrix::max_rank() const {
    return *std::max_element(ranks.begin(), ranks.end());
}

std::vector<std::size_t> factorize_modes(std::size_t dim, std::size_t d) {
    if (dim == 0) throw ArgumentError("cannot factorize dimension 0");
    if (d == 0) throw ArgumentError("mode count must be positive");

    std::vector<std::size_t> primes;
    std::size_t rest = dim;
    for (std::size_t p = 2; p * p <= rest; ++p) {
        while (rest % p == 0) {
            primes.push_back(p);
            rest /= p;
        }
    }
    if (rest > 1) primes.push_back(rest);
    std::sort(primes.rbegin(), primes.rend());

    std::vector<std::size_t> modes(d, 1);
    for (std::size_t p : primes) {
        auto smallest = std::min_element(modes.begin(), modes.end());
        *smallest *= p;
    }
    std::sort(modes.rbegin(), modes.rend());
    return modes;
}

TTMatrix tt_from_dense(const DenseMatrix& a, const TTConfig& config) {
    const std::size_t d = config.row_modes.size();
    if (d == 0 || config.col_modes.size() != d) {
        throw ShapeError("TT config needs matching nonempty row/col mode lists");
    }
    if (product(config.row_modes) != a.rows || product(config.col_modes) != a.cols) {
        throw ShapeError("TT modes multiply to " + std::to_string(product(config.row_modes)) + "x" +
                         std::to_string(product(config.col_modes)) + " but matrix is " +
                         std::to_string(a.rows) + "x" + std::to_string(a.cols));
    }
    const bool rank_mode = !config.max_ranks.empty();
    const bool eps_mode = config.epsilon.has_value();
    if (rank_mode == eps_mode) {
        throw ArgumentError("exactly one of max_ranks and epsilon must govern TT truncation");
    }
    if (rank_mode && config.max_ranks.size() != 1 && config.max_ranks.size() != d - 1) {
        throw ArgumentError("max_ranks needs 1 or d-1 entries, got " +
                            std::to_string(config.max_ranks.size()));
    }
    if (eps_mode && *config.epsilon < 0.0) throw ArgumentError("TT epsilon must be nonnegative");
    if (!all_finite(a)) throw NumericError("TT source matrix has non-finite entries");

    // Permute the matrix into the fused-index tensor, row-major over
    // (j_1 .. j_d) with j_k = i_k * m_k + c_k.
    std::vector<std::size_t> fused(d);
    for (std::size_t k = 0; k < d; ++k) fused[k] = config.row_modes[k] * config.col_modes[k];
    const std::size_t total = a.rows * a.cols;
    std::vector<double> cur(total);
    std::vector<std::size_t> digits;
    for (std::size_t p = 0; p < total; ++p) {
        decompose(p, fused, digits);
        std::size_t row = 0, col = 0;
        for (std::size_t k = 0; k < d; ++k) {
            row = row * config.row_modes[k] + digits[k] / config.col_modes[k];
            col = col * config.col_modes[k] + digits[k] % config.col_modes[k];
        }
        cur[p] = a(row, col);
    }

    double delta = 0.0;
    if (eps_mode && d > 1) {
        delta = *config.epsilon * frobenius_norm(a) / std::sqrt(static_cast<double>(d - 1));
    }

    TTMatrix tt;
    tt.row_modes = config.row_modes;
    tt.col_modes = config.col_modes;
    tt.ranks.assign(d + 1, 1);
    tt.cores.resize(d);

    std::size_t r_prev = 1;
    std::size_t remaining = total;
    for (std::size_t k = 0; k + 1 < d; ++k) {
        const std::size_t mrows = r_prev * fused[k];
        const std::size_t mcols = remaining / mrows;
        DenseMatrix m(mrows, mcols, std::move(cur));
        const std::size_t full = std::min(mrows, mcols);
        SvdResult svd = truncated_svd(m, full);

        std::size_t r = full;
        if (rank_mode) {
            const std::size_t cap =
                config.max_ranks.size() == 1 ? config.max_ranks[0] : config.max_ranks[k];
            if (cap == 0) throw RankError("TT rank cap must be positive");
            r = std::min(full, cap);
        } else {
            // Smallest rank whose discarded tail stays within the per-step
            // budget; at least one column is always kept.
            double tail = 0.0;
            r = full;
            for (std::size_t i = full; i-- > 1;) {
                tail += svd.s[i] * svd.s[i];
                if (tail > delta * delta) break;
                r = i;
            }
        }

        std::vector<double> core(fused[k] * r_prev * r);
        for (std::size_t j = 0; j < fused[k]; ++j) {
            for (std::size_t alpha = 0; alpha < r_prev; ++alpha) {
                for (std::size_t beta = 0; beta < r; ++beta) {
                    core[(j * r_prev + alpha) * r + beta] = svd.u(alpha * fused[k] + j, beta);
                }
            }
        }
        tt.cores[k] = std::move(core);
        tt.ranks[k + 1] = r;

        remaining = r * mcols;
        cur.assign(remaining, 0.0);
        for (std::size_t beta = 0; beta < r; ++beta) {
            for (std::size_t q = 0; q < mcols; ++q) {
                cur[beta * mcols + q] = svd.s[beta] * svd.v(q, beta);
            }
        }
        r_prev = r;
    }

    // Last core absorbs whatever is left; trailing rank is 1 by layout.
    std::vector<double> last(fused[d - 1] * r_prev);
    for (std::size_t j = 0; j < fused[d - 1]; ++j) {
        for (std::size_t alpha = 0; alpha < r_prev; ++alpha) {
            last[j * r_prev + alpha] = cur[alpha * fused[d - 1] + j];
        }
    }
    tt.cores[d - 1] = std::move(last);
    return tt;
}

double tt_element(const TTMatrix& tt, const std::vector<std::size_t>& index) {
    check_tt(tt);
    const std::size_t d = tt.dims();
    if (index.size() != d) {
        throw IndexError("TT multi-index has " + std::to_string(index.size()) + " entries for a " +
                         std::to_string(d) + "-core chain");
    }
    std::vector<double> vec{1.0};
    std::vector<double> next;
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t s = tt.row_modes[k] * tt.col_modes[k];
        if (index[k] >= s) {
            throw IndexError("TT index " + std::to_string(index[k]) + " out of bound " +
                             std::to_string(s) + " at core " + std::to_string(k));
        }
        const std::size_t ra = tt.ranks[k];
        const std::size_t rb = tt.ranks[k + 1];
        const double* slice = tt.cores[k].data() + index[k] * ra * rb;
        next.assign(rb, 0.0);
        for (std::size_t alpha = 0; alpha < ra; ++alpha) {
            const double va = vec[alpha];
            if (va == 0.0) continue;
            for (std::size_t beta = 0; beta < rb; ++beta) next[beta] += va * slice[alpha * rb + beta];
        }
        vec.swap(next);
    }
    return vec[0];
}

DenseMatrix tt_to_dense(const TTMatrix& tt) {
    check_tt(tt);
    const std::size_t d = tt.dims();
    DenseMatrix out(tt.rows(), tt.cols());
    std::vector<std::size_t> rdig, cdig;
    std::vector<std::size_t> index(d);
    for (std::size_t row = 0; row < out.rows; ++row) {
        decompose(row, tt.row_modes, rdig);
        for (std::size_t col = 0; col < out.cols; ++col) {
            decompose(col, tt.col_modes, cdig);
            for (std::size_t k = 0; k < d; ++k) index[k] = rdig[k] * tt.col_modes[k] + cdig[k];
            out(row, col) = tt_element(tt, index);
        }
    }
    return out;
}

std::vector<double> tt_matvec(const TTMatrix& tt, std::span<const double> x) {
    check_tt(tt);
    if (x.size() != tt.cols()) {
        throw ShapeError("TT matvec: vector length " + std::to_string(x.size()) +
                         " does not match " + std::to_string(tt.cols()) + " columns");
    }
    const std::size_t d = tt.dims();

    // n_suffix[k] = prod of row modes k..d-1; m_prefix[k] = prod of col
    // modes 0..k-1. The working array z after absorbing cores k..d-1 is
    // indexed (col digits < k) x (row digits >= k) x ranks[k].
    std::vector<std::size_t> n_suffix(d + 1, 1), m_prefix(d + 1, 1);
    for (std::size_t k = d; k-- > 0;) n_suffix[k] = n_suffix[k + 1] * tt.row_modes[k];
    for (std::size_t k = 0; k < d; ++k) m_prefix[k + 1] = m_prefix[k] * tt.col_modes[k];

    std::vector<double> z(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t k = d; k-- > 0;) {
        const std::size_t nk = tt.row_modes[k], mk = tt.col_modes[k];
        const std::size_t ra = tt.ranks[k], rb = tt.ranks[k + 1];
        const std::size_t suf = n_suffix[k + 1];
        next.assign(m_prefix[k] * n_suffix[k] * ra, 0.0);
        for (std::size_t p = 0; p < m_prefix[k]; ++p) {
            for (std::size_t i = 0; i < nk; ++i) {
                for (std::size_t c = 0; c < mk; ++c) {
                    const double* slice = tt.cores[k].data() + (i * mk + c) * ra * rb;
                    const double* zin = z.data() + (p * mk + c) * suf * rb;
                    double* zout = next.data() + (p * n_suffix[k] + i * suf) * ra;
                    for (std::size_t s = 0; s < suf; ++s) {
                        for (std::size_t alpha = 0; alpha < ra; ++alpha) {
                            double acc = 0.0;
                            for (std::size_t beta = 0; beta < rb; ++beta) {
                                acc += slice[alpha * rb + beta] * zin[s * rb + beta];
                            }
                            zout[s * ra + alpha] += acc;
                        }
                    }
                }
            }
        }
        z.swap(next);
    }
    return z;
}

namespace {

// One left-to-right step of the transpose/backward sweep: absorbs core k
// into t, whose layout is (col digits < k) x (row digits >= k) x ranks[k].
std::vector<double> absorb_left(const TTMatrix& tt, std::size_t k, const std::vector<double>& t,
                                const std::vector<std::size_t>& n_suffix,
                                const std::vector<std::size_t>& m_prefix) {
    const std::size_t nk = tt.row_modes[k], mk = tt.col_modes[k];
    const std::size_t ra = tt.ranks[k], rb = tt.ranks[k + 1];
    const std::size_t suf = n_suffix[k + 1];
    std::vector<double> out(m_prefix[k + 1] * suf * rb, 0.0);
    for (std::size_t p = 0; p < m_prefix[k]; ++p) {
        for (std::size_t i = 0; i < nk; ++i) {
            for (std::size_t c = 0; c < mk; ++c) {
                const double* slice = tt.cores[k].data() + (i * mk + c) * ra * rb;
                const double* tin = t.data() + (p * n_suffix[k] + i * suf) * ra;
                double* tout = out.data() + (p * mk + c) * suf * rb;
                for (std::size_t s = 0; s < suf; ++s) {
                    for (std::size_t beta = 0; beta < rb; ++beta) {
                        double acc = 0.0;
                        for (std::size_t alpha = 0; alpha < ra; ++alpha) {
                            acc += slice[alpha * rb + beta] * tin[s * ra + alpha];
                        }
                        tout[s * rb + beta] += acc;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

std::vector<double> tt_matvec_transpose(const TTMatrix& tt, std::span<const double> g) {
    check_tt(tt);
    if (g.size() != tt.rows()) {
        throw ShapeError("TT transpose matvec: vector length " + std::to_string(g.size()) +
                         " does not match " + std::to_string(tt.rows()) + " rows");
    }
    const std::size_t d = tt.dims();
    std::vector<std::size_t> n_suffix(d + 1, 1), m_prefix(d + 1, 1);
    for (std::size_t k = d; k-- > 0;) n_suffix[k] = n_suffix[k + 1] * tt.row_modes[k];
    for (std::size_t k = 0; k < d; ++k) m_prefix[k + 1] = m_prefix[k] * tt.col_modes[k];

    std::vector<double> t(g.begin(), g.end());
    for (std::size_t k = 0; k < d; ++k) t = absorb_left(tt, k, t, n_suffix, m_prefix);
    return t;
}

std::vector<double> tt_matvec_backward(const TTMatrix& tt, std::span<const double> x,
                                       std::span<const double> gy,
                                       std::vector<std::span<double>>& grad_cores) {
    check_tt(tt);
    const std::size_t d = tt.dims();
    if (x.size() != tt.cols()) {
        throw ShapeError("TT backward: input length " + std::to_string(x.size()) +
                         " does not match " + std::to_string(tt.cols()) + " columns");
    }
    if (gy.size() != tt.rows()) {
        throw ShapeError("TT backward: output gradient length " + std::to_string(gy.size()) +
                         " does not match " + std::to_string(tt.rows()) + " rows");
    }
    if (grad_cores.size() != d) {
        throw ShapeError("TT backward: gradient accumulator core count mismatch");
    }
    for (std::size_t k = 0; k < d; ++k) {
        if (grad_cores[k].size() != tt.cores[k].size()) {
            throw ShapeError("TT backward: gradient core " + std::to_string(k) + " size mismatch");
        }
    }

    std::vector<std::size_t> n_suffix(d + 1, 1), m_prefix(d + 1, 1);
    for (std::size_t k = d; k-- > 0;) n_suffix[k] = n_suffix[k + 1] * tt.row_modes[k];
    for (std::size_t k = 0; k < d; ++k) m_prefix[k + 1] = m_prefix[k] * tt.col_modes[k];

    // zstack[k] is x contracted with cores k..d-1, laid out
    // (col digits < k) x (row digits >= k) x ranks[k]; zstack[d] = x.
    std::vector<std::vector<double>> zstack(d + 1);
    zstack[d].assign(x.begin(), x.end());
    for (std::size_t k = d; k-- > 0;) {
        const std::size_t nk = tt.row_modes[k], mk = tt.col_modes[k];
        const std::size_t ra = tt.ranks[k], rb = tt.ranks[k + 1];
        const std::size_t suf = n_suffix[k + 1];
        const std::vector<double>& zin_all = zstack[k + 1];
        std::vector<double> zout_all(m_prefix[k] * n_suffix[k] * ra, 0.0);
        for (std::size_t p = 0; p < m_prefix[k]; ++p) {
            for (std::size_t i = 0; i < nk; ++i) {
                for (std::size_t c = 0; c < mk; ++c) {
                    const double* slice = tt.cores[k].data() + (i * mk + c) * ra * rb;
                    const double* zin = zin_all.data() + (p * mk + c) * suf * rb;
                    double* zout = zout_all.data() + (p * n_suffix[k] + i * suf) * ra;
                    for (std::size_t s = 0; s < suf; ++s) {
                        for (std::size_t alpha = 0; alpha < ra; ++alpha) {
                            double acc = 0.0;
                            for (std::size_t beta = 0; beta < rb; ++beta) {
                                acc += slice[alpha * rb + beta] * zin[s * rb + beta];
                            }
                            zout[s * ra + alpha] += acc;
                        }
                    }
                }
            }
        }
        zstack[k] = std::move(zout_all);
    }

    // Left sweep: t holds gy contracted with cores 0..k-1, same layout
    // family as zstack[k]. Pairing t against zstack[k+1] yields the core-k
    // gradient; the fully swept t is the input gradient.
    std::vector<double> t(gy.begin(), gy.end());
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t nk = tt.row_modes[k], mk = tt.col_modes[k];
        const std::size_t ra = tt.ranks[k], rb = tt.ranks[k + 1];
        const std::size_t suf = n_suffix[k + 1];
        const std::vector<double>& zin_all = zstack[k + 1];
        for (std::size_t p = 0; p < m_prefix[k]; ++p) {
            for (std::size_t i = 0; i < nk; ++i) {
                for (std::size_t c = 0; c < mk; ++c) {
                    double* gslice = grad_cores[k].data() + (i * mk + c) * ra * rb;
                    const double* tin = t.data() + (p * n_suffix[k] + i * suf) * ra;
                    const double* zin = zin_all.data() + (p * mk + c) * suf * rb;
                    for (std::size_t s = 0; s < suf; ++s) {
                        for (std::size_t alpha = 0; alpha < ra; ++alpha) {
                            const double tv = tin[s * ra + alpha];
                            if (tv == 0.0) continue;
                            for (std::size_t beta = 0; beta < rb; ++beta) {
                                gslice[alpha * rb + beta] += tv * zin[s * rb + beta];
                            }
                        }
                    }
                }
            }
        }
        t = absorb_left(tt, k, t, n_suffix, m_prefix);
    }
    return t;
}

std::size_t tt_param_count(const TTMatrix& tt) {
    std::size_t total = 0;
    for (const auto& core : tt.cores) total += core.size();
    return total;
}

std::vector<std::size_t> tt_bounded_ranks(const std::vector<std::size_t>& row_modes,
                                          const std::vector<std::size_t>& col_modes,
                                          const std::vector<std::size_t>& max_ranks) {
    const std::size_t d = row_modes.size();
    if (d == 0 || col_modes.size() != d) {
        throw ShapeError("TT ranks need matching nonempty row/col mode lists");
    }
    if (max_ranks.empty() || (max_ranks.size() != 1 && max_ranks.size() != d - 1)) {
        throw ArgumentError("max_ranks needs 1 or d-1 entries, got " +
                            std::to_string(max_ranks.size()));
    }
    std::vector<std::size_t> ranks(d + 1, 1);
    std::size_t left = 1;
    for (std::size_t j = 1; j < d; ++j) {
        left *= row_modes[j - 1] * col_modes[j - 1];
        std::size_t right = 1;
        for (std::size_t l = j; l < d; ++l) right *= row_modes[l] * col_modes[l];
        const std::size_t cap = max_ranks.size() == 1 ? max_ranks[0] : max_ranks[j - 1];
        if (cap == 0) throw RankError("TT rank cap must be positive");
        ranks[j] = std::min({cap, left, right});
    }
    return ranks;
}

TTMatrix tt_zeros(const std::vector<std::size_t>& row_modes,
                  const std::vector<std::size_t>& col_modes,
                  const std::vector<std::size_t>& ranks) {
    TTMatrix tt;
    tt.row_modes = row_modes;
    tt.col_modes = col_modes;
    tt.ranks = ranks;
    const std::size_t d = row_modes.size();
    tt.cores.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        tt.cores[k].assign(row_modes[k] * col_modes[k] * ranks[k] * ranks[k + 1], 0.0);
    }
    check_tt(tt);
    return tt;
}

}  // namespace rnnc
