#pragma once

// Dense double-precision matrix arithmetic, a deterministic seeded RNG, a
// one-sided Jacobi SVD and a symmetric Jacobi eigensolver. All functions are
// pure over immutable inputs and safe to call from multiple threads;
// SeededRng instances are single-owner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/parallel.hpp"

namespace lorafield {

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const DenseMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline bool all_finite(const DenseMatrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

inline DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

namespace detail {
// Minimum rows per worker so a chunk is worth a thread spawn.
inline std::size_t row_grain(std::size_t flops_per_row) {
    constexpr std::size_t min_flops = 1 << 16;
    return std::max<std::size_t>(1, min_flops / std::max<std::size_t>(flops_per_row, 1));
}
} // namespace detail

// c = a * b. Inner summation runs over k in ascending order for every output
// element, so results are bit-reproducible for any thread count.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    DenseMatrix c(a.rows(), b.cols());
    const std::size_t n = a.cols(), p = b.cols();
    parallel_for(a.rows(), detail::row_grain(n * p), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            double* ci = c.row(i);
            const double* ai = a.row(i);
            for (std::size_t k = 0; k < n; ++k) {
                const double aik = ai[k];
                const double* bk = b.row(k);
                for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
            }
        }
    });
    return c;
}

// c = a * b^T with a (M x K), b (N x K). Works on a transposed copy of b so
// the inner loop streams contiguous rows; the per-element summation order
// (k ascending) matches matmul exactly.
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
    const DenseMatrix bt = transpose(b);
    const std::size_t k_dim = a.cols(), n = b.rows();
    DenseMatrix c(a.rows(), n);
    parallel_for(a.rows(), detail::row_grain(k_dim * n), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            double* ci = c.row(i);
            const double* ai = a.row(i);
            for (std::size_t k = 0; k < k_dim; ++k) {
                const double aik = ai[k];
                const double* bk = bt.row(k);
                for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
            }
        }
    });
    return c;
}

// c = a^T * b with a (K x M), b (K x N). Same transposed-copy strategy and
// per-element summation order as the other kernels.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: inner dimensions " + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()));
    const DenseMatrix at = transpose(a);
    const std::size_t k_dim = a.rows(), n = b.cols();
    DenseMatrix c(at.rows(), n);
    parallel_for(at.rows(), detail::row_grain(k_dim * n), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            double* ci = c.row(i);
            const double* ai = at.row(i);
            for (std::size_t k = 0; k < k_dim; ++k) {
                const double aik = ai[k];
                const double* bk = b.row(k);
                for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
            }
        }
    });
    return c;
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

inline DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw ShapeError("subtract: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

inline DenseMatrix scaled(const DenseMatrix& a, double s) {
    DenseMatrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

// a += s * b
inline void add_scaled(DenseMatrix& a, const DenseMatrix& b, double s) {
    if (!a.same_shape(b)) throw ShapeError("add_scaled: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += s * b.data()[i];
}

inline double frobenius_norm(const DenseMatrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v * v;
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Singular value decomposition (one-sided Jacobi)
// ---------------------------------------------------------------------------

struct SvdResult {
    DenseMatrix u;             // m x k, orthonormal columns
    std::vector<double> sigma; // k values, descending, nonnegative
    DenseMatrix vt;            // k x n, orthonormal rows
};

namespace detail {

// Orthogonalizes the rows of `r` in place with Givens rotations, mirroring
// every rotation into `acc`. Converged when every row pair has relative
// inner product below `tol`. Rows whose norm falls below `null_tol` are
// numerically zero (rotation residue of rank-deficient input) and are left
// for the caller's orthonormal completion; rotating them would cycle
// forever on roundoff noise. Returns the number of sweeps used; throws
// NumericError when the sweep budget is exhausted.
inline int jacobi_row_orthogonalize(DenseMatrix& r, DenseMatrix& acc, double tol,
                                    double null_tol, int max_sweeps) {
    const std::size_t n = r.rows(), m = r.cols(), an = acc.cols();
    const double null_tol_sq = null_tol * null_tol;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double* rp = r.row(p);
                double* rq = r.row(q);
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += rp[i] * rp[i];
                    beta += rq[i] * rq[i];
                    gamma += rp[i] * rq[i];
                }
                if (alpha <= null_tol_sq || beta <= null_tol_sq) continue;
                const double denom = std::sqrt(alpha) * std::sqrt(beta);
                if (std::abs(gamma) <= tol * denom) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double a = rp[i], b = rq[i];
                    rp[i] = c * a - s * b;
                    rq[i] = s * a + c * b;
                }
                double* ap = acc.row(p);
                double* aq = acc.row(q);
                for (std::size_t i = 0; i < an; ++i) {
                    const double a = ap[i], b = aq[i];
                    ap[i] = c * a - s * b;
                    aq[i] = s * a + c * b;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }
    if (sweep >= max_sweeps)
        throw NumericError("svd: Jacobi iteration did not converge after " +
                           std::to_string(max_sweeps) + " sweeps");
    return sweep;
}

// Replaces near-null columns of u with an orthonormal completion built from
// canonical basis vectors.
inline void complete_orthonormal_columns(DenseMatrix& u, const std::vector<bool>& is_null) {
    const std::size_t m = u.rows(), k = u.cols();
    for (std::size_t j = 0; j < k; ++j) {
        if (!is_null[j]) continue;
        for (std::size_t e = 0; e < m; ++e) {
            std::vector<double> cand(m, 0.0);
            cand[e] = 1.0;
            for (std::size_t other = 0; other < k; ++other) {
                if (other == j) continue;
                if (is_null[other] && other > j) continue; // not yet filled
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u(i, other);
                for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, other);
            }
            double norm = 0.0;
            for (double v : cand) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / norm;
                break;
            }
        }
    }
}

} // namespace detail

// Thin SVD via one-sided Jacobi. Rotations stop once all off-diagonal column
// inner products fall below 1e-12 relative; suited to the <=256x512 matrices
// this project handles.
inline SvdResult svd(const DenseMatrix& input) {
    if (input.rows() == 0 || input.cols() == 0)
        throw std::invalid_argument("svd: empty matrix");
    if (!all_finite(input)) throw std::invalid_argument("svd: non-finite entries");

    const bool transposed = input.rows() < input.cols();
    // Work on rows of a^T so the Jacobi dot products are contiguous.
    DenseMatrix r = transposed ? input : transpose(input); // k-major: n x m with n <= m
    const std::size_t n = r.rows(), m = r.cols();
    DenseMatrix vt = DenseMatrix::identity(n);

    // The Frobenius norm is rotation-invariant, so this null threshold is
    // stable across the whole iteration.
    const double zero_tol = frobenius_norm(r) * 1e-13;
    detail::jacobi_row_orthogonalize(r, vt, 1e-12, zero_tol, 64);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        const double* rj = r.row(j);
        for (std::size_t i = 0; i < m; ++i) acc += rj[i] * rj[i];
        sigma[j] = std::sqrt(acc);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    DenseMatrix u(m, n);
    DenseMatrix vt_sorted(n, n);
    std::vector<double> sigma_sorted(n);
    std::vector<bool> is_null(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        const double s = sigma[src];
        if (s <= zero_tol) {
            is_null[j] = true;
            sigma_sorted[j] = 0.0;
        } else {
            sigma_sorted[j] = s;
            const double* rj = r.row(src);
            for (std::size_t i = 0; i < m; ++i) u(i, j) = rj[i] / s;
        }
        const double* v = vt.row(src);
        for (std::size_t i = 0; i < n; ++i) vt_sorted(j, i) = v[i];
    }
    detail::complete_orthonormal_columns(u, is_null);

    SvdResult out;
    out.sigma = std::move(sigma_sorted);
    if (transposed) {
        // input = (u * diag * vt)^T decomposition of the transpose.
        out.u = transpose(vt_sorted);
        out.vt = transpose(u);
    } else {
        out.u = std::move(u);
        out.vt = std::move(vt_sorted);
    }
    return out;
}

// Rank-r reconstruction: sum of the leading r outer products.
inline DenseMatrix truncate_svd(const SvdResult& s, std::size_t r) {
    if (r < 1 || r > s.sigma.size())
        throw std::invalid_argument("truncate_svd: rank " + std::to_string(r) +
                                    " outside [1, " + std::to_string(s.sigma.size()) + "]");
    const std::size_t m = s.u.rows(), n = s.vt.cols();
    DenseMatrix out(m, n);
    for (std::size_t t = 0; t < r; ++t) {
        const double sv = s.sigma[t];
        if (sv == 0.0) continue;
        const double* vrow = s.vt.row(t);
        for (std::size_t i = 0; i < m; ++i) {
            const double ui = sv * s.u(i, t);
            double* oi = out.row(i);
            for (std::size_t j = 0; j < n; ++j) oi[j] += ui * vrow[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic two-sided Jacobi)
// ---------------------------------------------------------------------------

struct SymmetricEigen {
    DenseMatrix vectors;       // columns are eigenvectors
    std::vector<double> values; // descending
};

inline SymmetricEigen symmetric_eigen(const DenseMatrix& m) {
    if (m.rows() != m.cols()) throw ShapeError("symmetric_eigen: matrix not square");
    const std::size_t n = m.rows();
    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
    DenseMatrix q = DenseMatrix::identity(n);

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
    for (double v : a.data()) scale = std::max(scale, std::abs(v));
    const double tol = std::max(scale, 1.0) * 1e-14;

    const int max_sweeps = 64;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t qq = p + 1; qq < n; ++qq) {
                const double apq = a(p, qq);
                if (std::abs(apq) <= tol) continue;
                const double app = a(p, p), aqq2 = a(qq, qq);
                const double theta = (aqq2 - app) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, qq);
                    a(i, p) = c * aip - s * aiq;
                    a(i, qq) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(qq, i);
                    a(p, i) = c * api - s * aqi;
                    a(qq, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double qip = q(i, p), qiq = q(i, qq);
                    q(i, p) = c * qip - s * qiq;
                    q(i, qq) = s * qip + c * qiq;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }
    if (sweep >= max_sweeps)
        throw NumericError("symmetric_eigen: Jacobi iteration did not converge after " +
                           std::to_string(max_sweeps) + " sweeps");

    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return values[x] > values[y]; });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = values[order[j]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = q(i, order[j]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic RNG (SplitMix64)
// ---------------------------------------------------------------------------

// Single-owner stream: one instance per thread of work, never shared.
// Identical seeds produce identical sequences on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Box-Muller over the uniform stream; pairs are generated together and
    // the spare standard normal is cached on this instance.
    double normal(double mean, double variance) {
        if (variance < 0.0) throw std::invalid_argument("normal: negative variance");
        if (variance == 0.0) return mean;
        double z;
        if (has_spare_) {
            has_spare_ = false;
            z = spare_;
        } else {
            const double u1 = 1.0 - next_double(); // (0, 1]
            const double u2 = next_double();
            const double mag = std::sqrt(-2.0 * std::log(u1));
            constexpr double two_pi = 6.283185307179586476925286766559;
            z = mag * std::cos(two_pi * u2);
            spare_ = mag * std::sin(two_pi * u2);
            has_spare_ = true;
        }
        return mean + std::sqrt(variance) * z;
    }

    // Independent child stream for parallel work units.
    SeededRng derive(std::uint64_t salt) const {
        std::uint64_t z = state_ ^ (0x9E3779B97F4A7C15ull * (salt + 0x632BE59BD9B4E019ull));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return SeededRng(z ^ (z >> 31));
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline double normal_sample(SeededRng& rng, double mean, double variance) {
    return rng.normal(mean, variance);
}

} // namespace lorafield
