#pragma once

// Feedback law H_lambda y = -gamma_lambda P_{N_lambda} y and the drift matrix
// of the closed-loop mode system
//   dy_k = [(-tau_k + c) y_k - gamma sum_i y_i (e_i, e_k)_{D0}] dt + a y_k dW.
// Feedback only enters columns j <= N, so the drift is block lower-triangular
// with a symmetric top-left block; its spectrum is real and cheap to read off.

#include <cmath>
#include <sstream>
#include <vector>

#include "spde/control_region.hpp"
#include "spde/errors.hpp"
#include "spde/linalg.hpp"
#include "spde/spectral_basis.hpp"

namespace spde {

struct FeedbackLaw {
    double lambda = 0.0;
    int n_low = 0;     // N_lambda
    double gain = 0.0; // gamma_lambda
    SpectralCalibration calibration;
    CouplingMatrix coupling;

    // escape hatch for under-gained experiments: same structure, different gain
    FeedbackLaw with_gain(double g) const {
        FeedbackLaw law = *this;
        law.gain = g;
        return law;
    }
};

// gamma_lambda = C e^{C sqrt(lambda)} lambda
inline double feedback_gain(double constant_C, double lambda) {
    return constant_C * std::exp(constant_C * std::sqrt(lambda)) * lambda;
}

inline FeedbackLaw build_feedback(double lambda, const ControlRegion& region,
                                  const EigenBasis& basis, const SpectralCalibration& calibration) {
    FeedbackLaw law;
    law.lambda = lambda;
    law.n_low = count_modes(lambda, basis);
    if (law.n_low < 1)
        throw validation_error("feedback: lambda below tau_1, no modes to control");
    if (basis.truncation < 2 * law.n_low) {
        std::ostringstream os;
        os << "truncation: M = " << basis.truncation << " < 2 N_lambda = " << 2 * law.n_low
           << "; the high-frequency block would be trivial";
        throw validation_error(os.str());
    }
    if (!calibration.covers(lambda))
        throw validation_error("feedback: lambda not in the calibration grid; recalibrate with "
                               "this lambda included");
    law.calibration = calibration;
    law.gain = feedback_gain(calibration.constant_C, lambda);
    law.coupling = build_coupling(region, basis, law.n_low);
    return law;
}

// stabilization hypothesis: lambda > max{2 tau_1, a^2 + 2c}
inline bool rate_hypothesis_holds(double lambda, const EigenBasis& basis, double a, double c) {
    return lambda > std::max(2.0 * basis.eigenvalues.front(), a * a + 2.0 * c);
}

struct ClosedLoopDrift {
    Matrix matrix;     // M x M
    int n_low = 0;     // columns carrying feedback
    double gain = 0.0;
    bool is_diag = false;   // exact zeros off the diagonal
    Vector diag;            // cached diagonal for the fast path
};

namespace detail {

inline void finalize_drift(ClosedLoopDrift& d) {
    d.is_diag = is_diagonal(d.matrix);
    d.diag = diagonal(d.matrix);
}

} // namespace detail

inline ClosedLoopDrift closed_loop_drift(const FeedbackLaw& law, double c, const EigenBasis& basis) {
    const int m = basis.truncation;
    if (law.coupling.entries.rows() != m)
        throw validation_error("closed_loop_drift: law built over a different basis");
    ClosedLoopDrift d;
    d.n_low = law.n_low;
    d.gain = law.gain;
    d.matrix = Matrix(m, m);
    for (int k = 0; k < m; ++k) {
        d.matrix(k, k) = -basis.eigenvalues[k] + c;
        for (int j = 0; j < law.n_low; ++j)
            d.matrix(k, j) -= law.gain * law.coupling.entries(k, j);
    }
    detail::finalize_drift(d);
    return d;
}

inline ClosedLoopDrift uncontrolled_drift(const EigenBasis& basis, double c) {
    ClosedLoopDrift d;
    d.matrix = Matrix(basis.truncation, basis.truncation);
    for (int k = 0; k < basis.truncation; ++k) d.matrix(k, k) = -basis.eigenvalues[k] + c;
    detail::finalize_drift(d);
    return d;
}

// control value in mode space (before localization by chi_{D0})
inline ModeVector apply_feedback(const FeedbackLaw& law, const ModeVector& state) {
    ModeVector u = project_low(state, std::min<int>(law.n_low, static_cast<int>(state.size())));
    for (double& v : u) v = -law.gain * v;
    return u;
}

// Real spectrum of the block lower-triangular drift: eigenvalues of the
// symmetric top-left block plus the uncontrolled diagonal tail.
inline Vector drift_eigenvalues(const ClosedLoopDrift& d) {
    const int m = d.matrix.rows();
    const int n = d.n_low;
    Vector evs;
    if (n > 0) {
        Matrix low(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) low(i, j) = d.matrix(i, j);
        evs = jacobi_eigenvalues(low);
    }
    for (int k = n; k < m; ++k) evs.push_back(d.matrix(k, k));
    std::sort(evs.begin(), evs.end());
    return evs;
}

inline double spectral_radius(const ClosedLoopDrift& d) {
    double r = 0.0;
    for (double ev : drift_eigenvalues(d)) r = std::max(r, std::abs(ev));
    return r;
}

} // namespace spde
