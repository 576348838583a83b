#pragma once

// Dirichlet eigenbasis of the interval (0, L): tau_k = (k pi / L)^2 with
// normalized eigenfunctions e_k(x) = sqrt(2/L) sin(k pi x / L). A state is a
// vector of Fourier coefficients against this basis, truncated to M modes.

#include <cmath>
#include <string>
#include <vector>

#include "spde/errors.hpp"

namespace spde {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// sin(pi * x), exact zero at integer x. Folding the argument to [-1/2, 1/2]
// keeps sine products of eigenfunctions exact at interval endpoints, which is
// what makes full-domain Gram matrices exactly the identity.
inline double sin_pi(double x) {
    double r = x - 2.0 * std::round(0.5 * x); // r in [-1, 1]
    if (r > 0.5) r = 1.0 - r;
    else if (r < -0.5) r = -1.0 - r;
    return std::sin(kPi * r);
}

struct Domain1D {
    double length;

    explicit Domain1D(double L) : length(L) {
        if (!(L > 0.0)) throw validation_error("length: interval length must be > 0");
    }
};

inline double eigenvalue(int k, const Domain1D& domain) {
    if (k < 1) throw validation_error("eigenvalue: mode index must be >= 1");
    const double w = static_cast<double>(k) * kPi / domain.length;
    return w * w;
}

inline double eigenfunction(int k, double x, const Domain1D& domain) {
    if (k < 1) throw validation_error("eigenfunction: mode index must be >= 1");
    return std::sqrt(2.0 / domain.length) * sin_pi(static_cast<double>(k) * (x / domain.length));
}

struct EigenBasis {
    Domain1D domain;
    int truncation;
    std::vector<double> eigenvalues; // tau_1 < tau_2 < ... < tau_M

    EigenBasis(Domain1D d, int M) : domain(d), truncation(M) {
        if (M < 1) throw validation_error("truncation: M must be >= 1");
        eigenvalues.resize(M);
        for (int k = 1; k <= M; ++k) eigenvalues[k - 1] = eigenvalue(k, domain);
    }
};

// N_lambda = #{k : tau_k <= lambda}, multiplicity-aware counting over the
// stored eigenvalues. Errors out when the truncation cannot certify the count.
inline int count_modes(double lambda, const EigenBasis& basis) {
    if (!(lambda > 0.0)) throw validation_error("lambda: must be > 0");
    if (basis.eigenvalues.back() <= lambda)
        throw validation_error("truncation: tau_M <= lambda, mode count would be undercounted; "
                               "increase M");
    int n = 0;
    for (double tau : basis.eigenvalues)
        if (tau <= lambda) ++n;
    return n;
}

using ModeVector = std::vector<double>;

inline double norm_sq(const ModeVector& v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return s;
}

inline ModeVector project_low(const ModeVector& v, int n) {
    if (n < 0 || n > static_cast<int>(v.size()))
        throw validation_error("project_low: n out of range");
    ModeVector out(v.size(), 0.0);
    for (int k = 0; k < n; ++k) out[k] = v[k];
    return out;
}

inline ModeVector project_high(const ModeVector& v, int n) {
    if (n < 0 || n > static_cast<int>(v.size()))
        throw validation_error("project_high: n out of range");
    ModeVector out(v.size(), 0.0);
    for (size_t k = n; k < v.size(); ++k) out[k] = v[k];
    return out;
}

inline double low_norm_sq(const ModeVector& v, int n) {
    double s = 0.0;
    for (int k = 0; k < n && k < static_cast<int>(v.size()); ++k) s += v[k] * v[k];
    return s;
}

} // namespace spde
