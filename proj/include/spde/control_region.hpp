#pragma once

// The control set D0: a finite union of disjoint open subintervals of (0, L).
// Gram entries of eigenfunction restrictions use the closed-form sine
// antiderivatives, so they carry no quadrature error; a quadrature oracle in
// the tests cross-checks them independently.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "spde/errors.hpp"
#include "spde/linalg.hpp"
#include "spde/spectral_basis.hpp"

namespace spde {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

class ControlRegion {
public:
    ControlRegion(std::vector<Interval> intervals, const Domain1D& domain)
        : intervals_(std::move(intervals)) {
        if (intervals_.empty())
            throw validation_error("region: at least one interval required");
        std::sort(intervals_.begin(), intervals_.end(),
                  [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        double prev_hi = 0.0;
        measure_ = 0.0;
        for (const Interval& iv : intervals_) {
            if (!(iv.lo < iv.hi))
                throw validation_error("region: interval must satisfy lo < hi");
            if (iv.lo < 0.0 || iv.hi > domain.length)
                throw validation_error("region: interval outside (0, L)");
            if (iv.lo < prev_hi)
                throw validation_error("region: intervals overlap");
            prev_hi = iv.hi;
            measure_ += iv.hi - iv.lo;
        }
        if (!(measure_ > 0.0)) throw validation_error("region: measure must be > 0");
    }

    // "a1-b1,a2-b2" with absolute coordinates in (0, L)
    static ControlRegion parse(const std::string& text, const Domain1D& domain) {
        std::vector<Interval> ivs;
        std::stringstream ss(text);
        std::string part;
        while (std::getline(ss, part, ',')) {
            const auto dash = part.find('-');
            if (dash == std::string::npos)
                throw validation_error("region: expected 'a-b' in '" + part + "'");
            try {
                size_t used = 0;
                const double lo = std::stod(part.substr(0, dash), &used);
                const double hi = std::stod(part.substr(dash + 1), &used);
                ivs.push_back({lo, hi});
            } catch (const std::exception&) {
                throw validation_error("region: cannot parse interval '" + part + "'");
            }
        }
        return ControlRegion(std::move(ivs), domain);
    }

    std::string format() const {
        std::ostringstream os;
        for (size_t i = 0; i < intervals_.size(); ++i) {
            if (i) os << ',';
            os << intervals_[i].lo << '-' << intervals_[i].hi;
        }
        return os.str();
    }

    const std::vector<Interval>& intervals() const { return intervals_; }
    double measure() const { return measure_; }

private:
    std::vector<Interval> intervals_;
    double measure_ = 0.0;
};

// (e_i, e_j)_{L^2(D0)} by the exact antiderivative of sine products.
inline double gram_entry(int i, int j, const ControlRegion& region, const EigenBasis& basis) {
    if (i < 1 || j < 1 || i > basis.truncation || j > basis.truncation)
        throw validation_error("gram_entry: mode index out of range");
    const double L = basis.domain.length;
    double total = 0.0;
    // dividing by L before scaling by the integer keeps endpoint ratios exact
    // (x = L gives u = 1), so sines at domain endpoints vanish identically
    if (i == j) {
        // (2/L) * [x/2 - (L/(4 k pi)) sin(2 k pi x / L)]
        for (const Interval& iv : region.intervals()) {
            const double u_lo = iv.lo / L, u_hi = iv.hi / L;
            const double osc = (sin_pi(2.0 * i * u_hi) - sin_pi(2.0 * i * u_lo)) /
                               (2.0 * kPi * i);
            total += (u_hi - u_lo) - osc;
        }
    } else {
        // (2/L) * [sin((i-j) pi x/L) / (2(i-j)pi/L) - sin((i+j) pi x/L) / (2(i+j)pi/L)]
        const int d = i - j, s = i + j;
        for (const Interval& iv : region.intervals()) {
            const double u_lo = iv.lo / L, u_hi = iv.hi / L;
            const double td = (sin_pi(d * u_hi) - sin_pi(d * u_lo)) / d;
            const double ts = (sin_pi(s * u_hi) - sin_pi(s * u_lo)) / s;
            total += (td - ts) / kPi;
        }
    }
    return total;
}

// Full M x n coupling B[k][i] = (e_{i+1}, e_{k+1})_{D0}; the top n x n block
// is the Gram matrix J_n, symmetrized to machine precision.
struct CouplingMatrix {
    Matrix entries;   // M x n
    Matrix low_block; // n x n, symmetric
    int n_low = 0;
};

inline CouplingMatrix build_coupling(const ControlRegion& region, const EigenBasis& basis, int n) {
    const int m = basis.truncation;
    if (n < 1 || n > m) throw validation_error("build_coupling: n out of range");
    CouplingMatrix cm;
    cm.n_low = n;
    cm.entries = Matrix(m, n);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i)
            cm.entries(k, i) = gram_entry(i + 1, k + 1, region, basis);
    cm.low_block = Matrix(n, n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            cm.low_block(k, i) = 0.5 * (cm.entries(k, i) + cm.entries(i, k));
    return cm;
}

// lower bound C^{-1} e^{-C sqrt(lambda)} of the spectral inequality
inline double spectral_bound(double constant_C, double lambda) {
    return std::exp(-constant_C * std::sqrt(lambda)) / constant_C;
}

// Empirical certificate for the spectral-inequality constant: the smallest
// C >= 1 such that lambda_min(J_{N_lambda}) >= C^{-1} e^{-C sqrt(lambda)}
// holds on every requested lambda.
struct SpectralCalibration {
    struct Sample {
        double lambda = 0.0;
        int n_low = 0;
        double lambda_min = 0.0;
    };

    double constant_C = 1.0;
    std::vector<Sample> samples;

    bool covers(double lambda, double rel_tol = 1e-12) const {
        for (const Sample& s : samples)
            if (std::abs(s.lambda - lambda) <= rel_tol * std::max(1.0, std::abs(lambda)))
                return true;
        return false;
    }
};

inline bool certificate_holds(const SpectralCalibration& cal) {
    for (const auto& s : cal.samples)
        if (spectral_bound(cal.constant_C, s.lambda) > s.lambda_min) return false;
    return true;
}

inline SpectralCalibration calibrate_spectral_constant(const ControlRegion& region,
                                                       const EigenBasis& basis,
                                                       const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw validation_error("calibration: empty lambda grid");
    SpectralCalibration cal;
    for (double lambda : lambdas) {
        SpectralCalibration::Sample s;
        s.lambda = lambda;
        s.n_low = count_modes(lambda, basis);
        if (s.n_low < 1)
            throw validation_error("calibration: lambda below tau_1, N_lambda = 0");
        const CouplingMatrix cm = build_coupling(region, basis, s.n_low);
        s.lambda_min = jacobi_eigenvalues(cm.low_block).front();
        if (s.lambda_min <= 1e-14) {
            std::ostringstream os;
            os << "calibration: Gram matrix numerically singular at lambda = " << lambda
               << " (lambda_min = " << s.lambda_min
               << "); region too thin for this frequency at working precision";
            throw validation_error(os.str());
        }
        cal.samples.push_back(s);
    }

    auto feasible = [&](double c) {
        for (const auto& s : cal.samples)
            if (spectral_bound(c, s.lambda) > s.lambda_min) return false;
        return true;
    };
    if (feasible(1.0)) {
        cal.constant_C = 1.0;
        return cal;
    }
    double lo = 1.0, hi = 2.0;
    const double c_max = 1e6;
    while (!feasible(hi)) {
        hi *= 2.0;
        if (hi > c_max) throw numerical_error("calibration: no certificate below C = 1e6");
    }
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? hi : lo) = mid;
    }
    cal.constant_C = hi; // feasible side, so the certificate re-checks exactly
    return cal;
}

} // namespace spde
