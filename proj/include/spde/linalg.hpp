#pragma once

// Small dense linear algebra kernels: the mode-space systems here stay below
// a few hundred rows, so everything is direct (no iterative methods).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "spde/errors.hpp"

namespace spde {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != static_cast<int>(x.size()))
        throw validation_error("matvec: dimension mismatch");
    Vector y(a.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw validation_error("matmul: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

// max column sum
inline double one_norm(const Matrix& a) {
    double best = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (int i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

inline bool is_diagonal(const Matrix& a) {
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (i != j && a(i, j) != 0.0) return false;
    return true;
}

inline Vector diagonal(const Matrix& a) {
    Vector d(std::min(a.rows(), a.cols()));
    for (size_t i = 0; i < d.size(); ++i) d[i] = a(static_cast<int>(i), static_cast<int>(i));
    return d;
}

inline bool all_finite(const Matrix& a) {
    for (double v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// Solves A X = B by LU with partial pivoting. A is overwritten conceptually
// (works on copies); throws numerical_error on a singular pivot.
inline Matrix lu_solve(Matrix a, Matrix b) {
    const int n = a.rows();
    if (a.cols() != n || b.rows() != n)
        throw validation_error("lu_solve: dimension mismatch");
    std::vector<int> piv(n);
    for (int i = 0; i < n; ++i) piv[i] = i;
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::abs(a(k, k));
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > best) { best = std::abs(a(i, k)); p = i; }
        if (best == 0.0) throw numerical_error("lu_solve: singular matrix");
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
            for (int j = 0; j < b.cols(); ++j) std::swap(b(k, j), b(p, j));
        }
        for (int i = k + 1; i < n; ++i) {
            const double m = a(i, k) / a(k, k);
            a(i, k) = m;
            for (int j = k + 1; j < n; ++j) a(i, j) -= m * a(k, j);
            for (int j = 0; j < b.cols(); ++j) b(i, j) -= m * b(k, j);
        }
    }
    // back substitution
    for (int k = n - 1; k >= 0; --k) {
        for (int j = 0; j < b.cols(); ++j) {
            double s = b(k, j);
            for (int i = k + 1; i < n; ++i) s -= a(k, i) * b(i, j);
            b(k, j) = s / a(k, k);
        }
    }
    return b;
}

// Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations.
// Optionally accumulates eigenvectors as columns of *vectors.
inline Vector jacobi_eigenvalues(Matrix a, Matrix* vectors = nullptr) {
    const int n = a.rows();
    if (a.cols() != n) throw validation_error("jacobi_eigenvalues: matrix not square");
    if (vectors) *vectors = Matrix::identity(n);
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
    if (scale == 0.0) return Vector(n, 0.0);
    const double tol = 1e-15 * scale;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off = std::max(off, std::abs(a(i, j)));
        if (off <= tol) {
            Vector ev = diagonal(a);
            if (vectors) {
                // sort eigenpairs ascending
                std::vector<int> idx(n);
                for (int i = 0; i < n; ++i) idx[i] = i;
                std::sort(idx.begin(), idx.end(), [&](int p, int q) { return ev[p] < ev[q]; });
                Matrix sorted(n, n);
                Vector evs(n);
                for (int c = 0; c < n; ++c) {
                    evs[c] = ev[idx[c]];
                    for (int r = 0; r < n; ++r) sorted(r, c) = (*vectors)(r, idx[c]);
                }
                *vectors = sorted;
                return evs;
            }
            std::sort(ev.begin(), ev.end());
            return ev;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) <= tol) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                if (vectors) {
                    for (int k = 0; k < n; ++k) {
                        const double vkp = (*vectors)(k, p), vkq = (*vectors)(k, q);
                        (*vectors)(k, p) = c * vkp - s * vkq;
                        (*vectors)(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    throw numerical_error("jacobi_eigenvalues: no convergence in 100 sweeps");
}

namespace detail {

// Pade(13,13) approximant after scaling, then repeated squaring
// (Higham 2005). Coefficients of the degree-13 approximant.
inline Matrix expm_pade13(const Matrix& a, int squarings) {
    static const double b[14] = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};
    const int n = a.rows();
    Matrix as = a;
    if (squarings > 0) {
        const double f = std::ldexp(1.0, -squarings);
        for (double& v : as.data()) v *= f;
    }
    const Matrix a2 = matmul(as, as);
    const Matrix a4 = matmul(a2, a2);
    const Matrix a6 = matmul(a2, a4);

    Matrix w(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            w(i, j) = b[13] * a6(i, j) + b[11] * a4(i, j) + b[9] * a2(i, j);
    Matrix u = matmul(a6, w);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            u(i, j) += b[7] * a6(i, j) + b[5] * a4(i, j) + b[3] * a2(i, j);
        u(i, i) += b[1];
    }
    u = matmul(as, u);

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            w(i, j) = b[12] * a6(i, j) + b[10] * a4(i, j) + b[8] * a2(i, j);
    Matrix v = matmul(a6, w);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            v(i, j) += b[6] * a6(i, j) + b[4] * a4(i, j) + b[2] * a2(i, j);
        v(i, i) += b[0];
    }

    Matrix num(n, n), den(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            num(i, j) = v(i, j) + u(i, j);
            den(i, j) = v(i, j) - u(i, j);
        }
    Matrix r = lu_solve(den, num);
    for (int s = 0; s < squarings; ++s) r = matmul(r, r);
    return r;
}

} // namespace detail

// Matrix exponential. Exactly diagonal input takes the closed form; otherwise
// scaling-and-squaring with the 1-norm threshold of the (13,13) approximant.
inline Matrix expm(const Matrix& a) {
    const int n = a.rows();
    if (a.cols() != n) throw validation_error("expm: matrix not square");
    if (is_diagonal(a)) {
        Matrix e(n, n);
        for (int i = 0; i < n; ++i) e(i, i) = std::exp(a(i, i));
        if (!all_finite(e)) throw numerical_error("expm: non-finite result (norm too extreme)");
        return e;
    }
    const double theta13 = 5.371920351148152;
    const double nrm = one_norm(a);
    if (!std::isfinite(nrm)) throw numerical_error("expm: non-finite input");
    int squarings = 0;
    if (nrm > theta13)
        squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
    Matrix r = detail::expm_pade13(a, squarings);
    if (!all_finite(r)) throw numerical_error("expm: non-finite result (norm too extreme)");
    return r;
}

} // namespace spde
