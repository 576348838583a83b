#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "spde/linalg.hpp"

using namespace spde;

namespace {

Matrix random_matrix(std::mt19937& gen, int n, double scale) {
    std::uniform_real_distribution<double> ud(-scale, scale);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = ud(gen);
    return m;
}

// truncated Taylor series, only valid for small norms; test oracle
Matrix expm_taylor(const Matrix& a, int terms) {
    Matrix sum = Matrix::identity(a.rows());
    Matrix term = Matrix::identity(a.rows());
    for (int k = 1; k <= terms; ++k) {
        term = matmul(term, a);
        for (double& v : term.data()) v /= k;
        for (size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += term.data()[i];
    }
    return sum;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i)
        d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

} // namespace

TEST_CASE("matvec and matmul") {
    Matrix a(2, 2);
    a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
    const Vector y = matvec(a, {1.0, 1.0});
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[1] == doctest::Approx(7.0));
    const Matrix sq = matmul(a, a);
    CHECK(sq(0, 0) == doctest::Approx(7.0));
    CHECK(sq(1, 1) == doctest::Approx(22.0));
    CHECK_THROWS_AS(matvec(a, {1.0}), validation_error);
}

TEST_CASE("lu_solve recovers known solution") {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + trial % 8;
        Matrix a = random_matrix(gen, n, 2.0);
        for (int i = 0; i < n; ++i) a(i, i) += 4.0; // keep it comfortably nonsingular
        Matrix x_true(n, 1);
        for (int i = 0; i < n; ++i) x_true(i, 0) = std::sin(i + trial + 1.0);
        Matrix b(n, 1);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += a(i, j) * x_true(j, 0);
            b(i, 0) = s;
        }
        const Matrix x = lu_solve(a, b);
        for (int i = 0; i < n; ++i) CHECK(x(i, 0) == doctest::Approx(x_true(i, 0)).epsilon(1e-10));
    }
    Matrix sing(2, 2);
    sing(0, 0) = 1; sing(0, 1) = 2; sing(1, 0) = 2; sing(1, 1) = 4;
    Matrix rhs(2, 1);
    CHECK_THROWS_AS(lu_solve(sing, rhs), numerical_error);
}

TEST_CASE("jacobi eigenvalues: analytic 2x2 and residuals") {
    Matrix j2(2, 2);
    j2(0, 0) = 0.5; j2(0, 1) = 0.4244131815783876;
    j2(1, 0) = j2(0, 1); j2(1, 1) = 0.5;
    const Vector ev = jacobi_eigenvalues(j2);
    CHECK(ev[0] == doctest::Approx(0.5 - 0.4244131815783876).epsilon(1e-13));
    CHECK(ev[1] == doctest::Approx(0.5 + 0.4244131815783876).epsilon(1e-13));

    std::mt19937 gen(11);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial;
        Matrix a = random_matrix(gen, n, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < i; ++j) a(i, j) = a(j, i);
        Matrix vecs;
        const Vector evs = jacobi_eigenvalues(a, &vecs);
        for (int k = 1; k < n; ++k) CHECK(evs[k - 1] <= evs[k]);
        // residual ||A v - lambda v|| per eigenpair
        for (int k = 0; k < n; ++k) {
            Vector v(n);
            for (int i = 0; i < n; ++i) v[i] = vecs(i, k);
            const Vector av = matvec(a, v);
            double res = 0.0;
            for (int i = 0; i < n; ++i) res = std::max(res, std::abs(av[i] - evs[k] * v[i]));
            CHECK(res < 1e-12);
        }
        // trace preserved
        double tr = 0.0, se = 0.0;
        for (int i = 0; i < n; ++i) { tr += a(i, i); se += evs[i]; }
        CHECK(se == doctest::Approx(tr).epsilon(1e-12));
    }
}

TEST_CASE("expm: diagonal, rotation, nilpotent") {
    Matrix d(2, 2);
    d(0, 0) = -1.0; d(1, 1) = -4.0;
    const Matrix ed = expm(d);
    CHECK(ed(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(ed(1, 1) == doctest::Approx(std::exp(-4.0)).epsilon(1e-14));
    CHECK(ed(0, 1) == 0.0);

    const double th = 0.7;
    Matrix rot(2, 2);
    rot(0, 1) = -th; rot(1, 0) = th;
    const Matrix er = expm(rot);
    CHECK(er(0, 0) == doctest::Approx(std::cos(th)).epsilon(1e-13));
    CHECK(er(0, 1) == doctest::Approx(-std::sin(th)).epsilon(1e-13));
    CHECK(er(1, 0) == doctest::Approx(std::sin(th)).epsilon(1e-13));

    Matrix nil(2, 2);
    nil(0, 1) = 1.0;
    const Matrix en = expm(nil);
    CHECK(en(0, 0) == doctest::Approx(1.0));
    CHECK(en(0, 1) == doctest::Approx(1.0));
    CHECK(en(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("expm matches Taylor oracle and inverts") {
    std::mt19937 gen(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial % 5;
        Matrix a = random_matrix(gen, n, 0.4 / n);
        const Matrix e1 = expm(a);
        const Matrix e2 = expm_taylor(a, 40);
        CHECK(max_abs_diff(e1, e2) < 1e-13);

        Matrix ma = a;
        for (double& v : ma.data()) v = -v;
        const Matrix prod = matmul(e1, expm(ma));
        CHECK(max_abs_diff(prod, Matrix::identity(n)) < 1e-12);
    }
}

TEST_CASE("expm handles large stable norms via squaring") {
    // block lower-triangular drift-like matrix with a stiff gain
    Matrix a(3, 3);
    a(0, 0) = -1.0 - 800.0;
    a(1, 0) = -340.0; a(1, 1) = -4.0;
    a(2, 0) = -120.0; a(2, 2) = -9.0;
    const Matrix e = expm(a); // exp(A), spectrum {-801, -4, -9}
    CHECK(e(0, 0) == doctest::Approx(std::exp(-801.0)));
    CHECK(e(1, 1) == doctest::Approx(std::exp(-4.0)).epsilon(1e-9));
    CHECK(e(2, 2) == doctest::Approx(std::exp(-9.0)).epsilon(1e-9));
    // coupling entry has the two-point divided-difference form
    const double expect10 = -340.0 * (std::exp(-4.0) - std::exp(-801.0)) / (-4.0 + 801.0);
    CHECK(e(1, 0) == doctest::Approx(expect10).epsilon(1e-8));

    Matrix over(2, 2);
    over(0, 0) = 1200.0; over(0, 1) = 1.0; over(1, 1) = 1100.0;
    CHECK_THROWS_AS(expm(over), numerical_error); // overflow reported, not returned
}
