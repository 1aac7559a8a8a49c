#include "doctest.h"

#include <cmath>
#include <vector>

#include "lorafield/linalg.hpp"

using namespace lorafield;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, SeededRng& rng, double scale = 1.0) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-scale, scale);
    return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

// Orthogonal matrix built from a product of Householder reflectors; exact up
// to roundoff, independent of the SVD under test.
DenseMatrix random_orthogonal(std::size_t n, SeededRng& rng) {
    DenseMatrix q = DenseMatrix::identity(n);
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> v(n);
        double norm2 = 0.0;
        for (auto& x : v) {
            x = rng.normal(0.0, 1.0);
            norm2 += x * x;
        }
        DenseMatrix h = DenseMatrix::identity(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) h(i, j) -= 2.0 * v[i] * v[j] / norm2;
        q = matmul(q, h);
    }
    return q;
}

} // namespace

TEST_CASE("matmul basic examples") {
    SeededRng rng(11);
    DenseMatrix m = random_matrix(3, 3, rng);
    CHECK(max_abs_diff(matmul(DenseMatrix::identity(3), m), m) == 0.0);

    DenseMatrix a(2, 2);
    a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
    DenseMatrix b(2, 1, 1.0);
    DenseMatrix c = matmul(a, b);
    CHECK(c(0, 0) == doctest::Approx(3.0));
    CHECK(c(1, 0) == doctest::Approx(7.0));

    DenseMatrix z = matmul(DenseMatrix(2, 3), random_matrix(3, 4, rng));
    CHECK(z.rows() == 2);
    CHECK(z.cols() == 4);
    for (double v : z.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(matmul(DenseMatrix(2, 3), DenseMatrix(4, 2)), ShapeError);
}

TEST_CASE("matmul transposed variants agree with plain matmul") {
    SeededRng rng(12);
    DenseMatrix a = random_matrix(7, 5, rng);
    DenseMatrix b = random_matrix(5, 6, rng);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), matmul(a, b)) < 1e-14);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), matmul(a, b)) < 1e-14);
}

TEST_CASE("matmul associativity on random triples") {
    SeededRng rng(13);
    for (int rep = 0; rep < 5; ++rep) {
        DenseMatrix a = random_matrix(6, 4, rng);
        DenseMatrix b = random_matrix(4, 5, rng);
        DenseMatrix c = random_matrix(5, 3, rng);
        DenseMatrix left = matmul(matmul(a, b), c);
        DenseMatrix right = matmul(a, matmul(b, c));
        double scale = frobenius_norm(left);
        CHECK(max_abs_diff(left, right) <= 1e-9 * std::max(1.0, scale));
    }
}

TEST_CASE("matmul is bit-reproducible across thread counts") {
    SeededRng rng(14);
    DenseMatrix a = random_matrix(64, 48, rng);
    DenseMatrix b = random_matrix(48, 64, rng);
    int saved = thread_count();
    set_thread_count(1);
    DenseMatrix c1 = matmul(a, b);
    set_thread_count(4);
    DenseMatrix c4 = matmul(a, b);
    set_thread_count(saved);
    CHECK(c1 == c4);
}

namespace {

void check_svd_invariants(const DenseMatrix& m, const SvdResult& s) {
    const std::size_t k = s.sigma.size();
    REQUIRE(k == std::min(m.rows(), m.cols()));
    for (std::size_t i = 0; i + 1 < k; ++i) CHECK(s.sigma[i] >= s.sigma[i + 1]);
    for (double sv : s.sigma) CHECK(sv >= 0.0);

    // u columns orthonormal, vt rows orthonormal.
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            double du = 0.0, dv = 0.0;
            for (std::size_t t = 0; t < m.rows(); ++t) du += s.u(t, i) * s.u(t, j);
            for (std::size_t t = 0; t < m.cols(); ++t) dv += s.vt(i, t) * s.vt(j, t);
            const double want = i == j ? 1.0 : 0.0;
            CHECK(std::abs(du - want) < 1e-10);
            CHECK(std::abs(dv - want) < 1e-10);
        }
    }

    // Reconstruction within 1e-8 relative Frobenius error.
    DenseMatrix recon(m.rows(), m.cols());
    for (std::size_t t = 0; t < k; ++t)
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j)
                recon(i, j) += s.sigma[t] * s.u(i, t) * s.vt(t, j);
    double err = frobenius_norm(subtract(recon, m));
    double denom = std::max(frobenius_norm(m), 1e-30);
    CHECK(err / denom < 1e-8);
}

} // namespace

TEST_CASE("svd diagonal and rank-1 cases") {
    DenseMatrix d(2, 2);
    d(0, 0) = 3.0; d(1, 1) = 1.0;
    SvdResult s = svd(d);
    CHECK(s.sigma[0] == doctest::Approx(3.0));
    CHECK(s.sigma[1] == doctest::Approx(1.0));
    check_svd_invariants(d, s);

    // Outer product u v^T with |u| = 2, |v| = 1.
    std::vector<double> u = {2.0, 0.0, 0.0};
    std::vector<double> v = {0.6, 0.8};
    DenseMatrix r1(3, 2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) r1(i, j) = u[i] * v[j];
    SvdResult s1 = svd(r1);
    CHECK(s1.sigma[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s1.sigma[1] == doctest::Approx(0.0).epsilon(1e-12));
    check_svd_invariants(r1, s1);
}

TEST_CASE("svd invariants on random shapes") {
    SeededRng rng(21);
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{8, 5},
                        {5, 8},
                        {1, 4},
                        {6, 6},
                        {16, 3}}) {
        DenseMatrix m = random_matrix(r, c, rng);
        check_svd_invariants(m, svd(m));
    }
}

TEST_CASE("svd of orthogonal matrix has unit singular values") {
    SeededRng rng(22);
    DenseMatrix q = random_orthogonal(6, rng);
    SvdResult s = svd(q);
    for (double sv : s.sigma) CHECK(std::abs(sv - 1.0) < 1e-10);
}

TEST_CASE("Eckart-Young: truncation beats random rank-2 candidates") {
    SeededRng rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        DenseMatrix m = random_matrix(8, 5, rng);
        SvdResult s = svd(m);
        double trunc_err = frobenius_norm(subtract(m, truncate_svd(s, 2)));
        // Brute-force oracle: 100 random rank-2 candidates b * a.
        for (int cand = 0; cand < 100; ++cand) {
            DenseMatrix b = random_matrix(8, 2, rng, 2.0);
            DenseMatrix a = random_matrix(2, 5, rng, 2.0);
            double err = frobenius_norm(subtract(m, matmul(b, a)));
            CHECK(trunc_err <= err + 1e-12);
        }
    }
}

TEST_CASE("truncate_svd reconstruction and tail error") {
    SeededRng rng(24);
    DenseMatrix m = random_matrix(7, 4, rng);
    SvdResult s = svd(m);

    CHECK(frobenius_norm(subtract(truncate_svd(s, 4), m)) <= 1e-8 * frobenius_norm(m));

    // Rank-1 matrix truncated at r = 1 reconstructs exactly.
    DenseMatrix r1(5, 3);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) r1(i, j) = (i + 1.0) * (j - 1.5);
    SvdResult s1 = svd(r1);
    CHECK(frobenius_norm(subtract(truncate_svd(s1, 1), r1)) <= 1e-10 * frobenius_norm(r1));

    // Frobenius error equals sqrt of the trailing sigma^2 sum.
    for (std::size_t r = 1; r <= 4; ++r) {
        double err = frobenius_norm(subtract(m, truncate_svd(s, r)));
        double tail = 0.0;
        for (std::size_t i = r; i < s.sigma.size(); ++i) tail += s.sigma[i] * s.sigma[i];
        CHECK(err == doctest::Approx(std::sqrt(tail)).epsilon(1e-8));
    }

    CHECK_THROWS_AS(truncate_svd(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(truncate_svd(s, 5), std::invalid_argument);
}

TEST_CASE("truncation has rank at most r") {
    SeededRng rng(25);
    DenseMatrix m = random_matrix(9, 6, rng);
    SvdResult s = svd(m);
    for (std::size_t r : {1u, 3u}) {
        SvdResult again = svd(truncate_svd(s, r));
        CHECK(again.sigma[r] < 1e-10 * again.sigma[0]);
    }
}

TEST_CASE("symmetric eigendecomposition") {
    SeededRng rng(26);
    DenseMatrix x = random_matrix(6, 9, rng);
    DenseMatrix c = matmul_nt(x, x); // PSD Gram matrix
    SymmetricEigen e = symmetric_eigen(c);

    for (std::size_t i = 0; i + 1 < e.values.size(); ++i) CHECK(e.values[i] >= e.values[i + 1]);
    for (double v : e.values) CHECK(v >= -1e-10);

    // Q diag(values) Q^T reconstructs, Q orthonormal.
    DenseMatrix lam(6, 6);
    for (int i = 0; i < 6; ++i) lam(i, i) = e.values[i];
    DenseMatrix recon = matmul(matmul(e.vectors, lam), transpose(e.vectors));
    CHECK(max_abs_diff(recon, c) < 1e-9 * std::max(1.0, frobenius_norm(c)));
    DenseMatrix qtq = matmul_tn(e.vectors, e.vectors);
    CHECK(max_abs_diff(qtq, DenseMatrix::identity(6)) < 1e-10);
}

TEST_CASE("seeded rng determinism and normal statistics") {
    SeededRng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    SeededRng n1(7), n2(7);
    for (int i = 0; i < 50; ++i) CHECK(n1.normal(0.0, 1.0) == n2.normal(0.0, 1.0));

    SeededRng r(1234);
    CHECK(r.normal(3.5, 0.0) == 3.5);

    const int count = 100000;
    double mean = 0.0;
    std::vector<double> samples(count);
    SeededRng s(99);
    for (auto& v : samples) {
        v = s.normal(0.0, 1.0);
        mean += v;
    }
    mean /= count;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= count - 1;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);

    CHECK_THROWS_AS(r.normal(0.0, -1.0), std::invalid_argument);
}

TEST_CASE("svd rejects non-finite input") {
    DenseMatrix m(2, 2);
    m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(svd(m), std::invalid_argument);
}
