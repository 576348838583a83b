#pragma once

// Monte Carlo estimators: decay-rate fits on the log of ensemble means,
// per-path Lyapunov statistics, sup statistics, and strong-convergence order
// of the discrete schemes against the exact-transform oracle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "spde/ensemble.hpp"
#include "spde/errors.hpp"
#include "spde/feedback.hpp"
#include "spde/sde_engine.hpp"

namespace spde {

struct OlsResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;
};

inline OlsResult ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw validation_error("ols_fit: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw validation_error("ols_fit: degenerate abscissa");
    OlsResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    if (syy == 0.0) {
        r.r_squared = 1.0;
    } else {
        double ss_res = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            const double e = y[i] - (r.intercept + r.slope * x[i]);
            ss_res += e * e;
        }
        r.r_squared = 1.0 - ss_res / syy;
    }
    return r;
}

struct DecayFit {
    double exponent = 0.0;  // fitted slope; the decay rate is its negation
    double intercept = 0.0;
    double r_squared = 1.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    long n_paths = 0;
    bool reliable = true;   // r^2 >= 0.9
};

namespace detail {

inline DecayFit fit_log_series(const std::vector<double>& times, const std::vector<double>& series,
                               double t_lo, double t_hi, long n_paths) {
    if (!(t_lo >= 0.0) || !(t_hi > t_lo))
        throw validation_error("fit window: need 0 <= t_lo < t_hi");
    if (t_lo < 0.2 * t_hi - 1e-12)
        throw validation_error("fit window: t_lo must be >= 0.2 t_hi to skip the transient");
    std::vector<double> xs, ys;
    for (size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_lo - 1e-12 || times[k] > t_hi + 1e-12) continue;
        if (!(series[k] > 0.0))
            throw validation_error("fit: ensemble mean vanished inside the window (degenerate, "
                                   "all-zero states or underflow)");
        xs.push_back(times[k]);
        ys.push_back(std::log(series[k]));
    }
    if (xs.size() < 2) throw validation_error("fit window: fewer than two grid points inside");
    const OlsResult ols = ols_fit(xs, ys);
    DecayFit fit;
    fit.exponent = ols.slope;
    fit.intercept = ols.intercept;
    fit.r_squared = ols.r_squared;
    fit.t_lo = t_lo;
    fit.t_hi = t_hi;
    fit.n_paths = n_paths;
    fit.reliable = ols.r_squared >= 0.9;
    return fit;
}

} // namespace detail

// OLS of log E||y(t)||^2 over [t_lo, t_hi].
inline DecayFit fit_mean_square_decay(const EnsembleStats& ensemble, double t_lo, double t_hi) {
    if (ensemble.n_paths < 100)
        throw validation_error("fit: need at least 100 paths");
    return detail::fit_log_series(ensemble.times, ensemble.mean_norm_sq, t_lo, t_hi,
                                  ensemble.n_paths);
}

// OLS of log E||H_lambda y(t)||^2 = log(gamma^2 E||P_N y(t)||^2). With zero
// gain the energy is identically zero and the fit degenerates to
// (exponent 0, intercept -inf).
inline DecayFit feedback_energy(const EnsembleStats& ensemble, const FeedbackLaw& law,
                                double t_lo, double t_hi) {
    if (ensemble.n_paths < 100)
        throw validation_error("fit: need at least 100 paths");
    if (law.gain == 0.0) {
        DecayFit fit;
        fit.exponent = 0.0;
        fit.intercept = -std::numeric_limits<double>::infinity();
        fit.t_lo = t_lo;
        fit.t_hi = t_hi;
        fit.n_paths = ensemble.n_paths;
        return fit;
    }
    std::vector<double> energy(ensemble.mean_low_sq.size());
    const double g2 = law.gain * law.gain;
    for (size_t k = 0; k < energy.size(); ++k) energy[k] = g2 * ensemble.mean_low_sq[k];
    return detail::fit_log_series(ensemble.times, energy, t_lo, t_hi, ensemble.n_paths);
}

struct LyapunovSample {
    std::vector<double> values; // per path (1/t) log ||y(t_eval)||^2, zero-norm paths excluded
    double mean = 0.0;
    double max = 0.0;
    double p95 = 0.0; // nearest-rank 95th percentile
    long n_excluded = 0;
    double t_eval = 0.0;
};

inline LyapunovSample estimate_as_exponent(const EnsembleStats& ensemble, double t_eval) {
    if (std::abs(ensemble.t_end - t_eval) > 1e-9 * std::max(1.0, t_eval))
        throw validation_error("as exponent: ensemble horizon differs from t_eval");
    LyapunovSample out;
    out.t_eval = t_eval;
    out.values.reserve(ensemble.final_log_norm_sq.size());
    for (double lg : ensemble.final_log_norm_sq) {
        if (!std::isfinite(lg)) {
            ++out.n_excluded; // exact zero can only come from underflow
            continue;
        }
        out.values.push_back(lg / t_eval);
    }
    if (out.values.empty())
        throw validation_error("as exponent: every path hit zero norm (underflow)");
    std::vector<double> sorted = out.values;
    std::sort(sorted.begin(), sorted.end());
    double s = 0.0;
    for (double v : sorted) s += v;
    out.mean = s / static_cast<double>(sorted.size());
    out.max = sorted.back();
    const size_t rank = static_cast<size_t>(
        std::ceil(0.95 * static_cast<double>(sorted.size())));
    out.p95 = sorted[std::min(sorted.size() - 1, rank == 0 ? 0 : rank - 1)];
    return out;
}

// ensemble mean of the per-path grid supremum of ||y||^2 over t >= sup_from
// (sup_from fixed when the ensemble was run)
inline double sup_statistic(const EnsembleStats& ensemble) {
    double s = 0.0;
    for (double v : ensemble.sup_norm_sq) s += v;
    return s / static_cast<double>(ensemble.sup_norm_sq.size());
}

struct ConvergenceResult {
    std::vector<double> dts;
    std::vector<double> errors; // strong error E||y_scheme(T) - y_exact(T)||
    double order = 0.0;
    bool determined = true; // false when errors sit at the noise floor
};

// Strong order of config.scheme against the exact transform, with shared
// Brownian refinements: every level consumes sums of the same fine
// increments, so errors across levels are positively coupled and the fitted
// order is stable at small path counts.
inline ConvergenceResult convergence_order(const SimConfig& config, const ClosedLoopDrift& drift,
                                           const ModeVector& y0,
                                           const std::vector<double>& dt_levels, int workers) {
    config.validate();
    if (config.scheme == Scheme::exact_transform)
        throw validation_error("convergence: pick a discrete scheme to compare against the oracle");
    if (dt_levels.size() < 2)
        throw validation_error("convergence: need at least two dt levels");
    for (size_t i = 1; i < dt_levels.size(); ++i)
        if (!(dt_levels[i] < dt_levels[i - 1]))
            throw validation_error("convergence: dt levels must be strictly decreasing");
    const double dt_fine = dt_levels.back();
    const long n_fine = std::lround(config.t_end / dt_fine);
    if (std::abs(n_fine * dt_fine - config.t_end) > 1e-9)
        throw validation_error("convergence: finest dt must divide t_end");
    std::vector<long> ratios(dt_levels.size());
    for (size_t l = 0; l < dt_levels.size(); ++l) {
        ratios[l] = std::lround(dt_levels[l] / dt_fine);
        if (std::abs(ratios[l] * dt_fine - dt_levels[l]) > 1e-12)
            throw validation_error("convergence: every dt must be an integer multiple of the "
                                   "finest dt (refinement shares increments)");
        if (std::lround(config.t_end / dt_levels[l]) * ratios[l] != n_fine)
            throw validation_error("convergence: every dt must divide t_end");
    }

    const size_t n_levels = dt_levels.size();
    const long n_chunks = (config.n_paths + kEnsembleChunk - 1) / kEnsembleChunk;
    std::vector<std::vector<double>> chunk_err(n_chunks);

    // exact solution factor at T: expm(A T), shared across paths
    ExactPropagator prop(drift);
    ModeVector det_T;
    prop.apply(config.t_end, y0, det_T);

    parallel_chunks(n_chunks, resolve_workers(workers), [&](long chunk) {
        auto& err = chunk_err[chunk];
        err.assign(n_levels, 0.0);
        std::vector<double> fine_dw(n_fine);
        const long lo = chunk * kEnsembleChunk;
        const long hi = std::min(config.n_paths, lo + kEnsembleChunk);
        for (long p = lo; p < hi; ++p) {
            double w_T = 0.0;
            const double sq = std::sqrt(dt_fine);
            for (long k = 0; k < n_fine; ++k) {
                fine_dw[k] = normal_draw(config.seed, static_cast<uint64_t>(p),
                                         static_cast<uint64_t>(k)) * sq;
                w_T += fine_dw[k];
            }
            ModeVector y_exact(det_T.size());
            const double factor = std::exp(config.a * w_T - 0.5 * config.a * config.a * config.t_end);
            for (size_t i = 0; i < det_T.size(); ++i) y_exact[i] = factor * det_T[i];

            for (size_t l = 0; l < n_levels; ++l) {
                const long r = ratios[l];
                const double h = dt_levels[l];
                ModeVector y = y0;
                for (long k = 0; k < n_fine; k += r) {
                    double dw = 0.0;
                    for (long j = 0; j < r; ++j) dw += fine_dw[k + j];
                    y = config.scheme == Scheme::milstein ? step_milstein(y, drift, config.a, h, dw)
                                                          : step_euler(y, drift, config.a, h, dw);
                    detail::check_finite(y, (k + r) * dt_fine, p);
                }
                double d2 = 0.0;
                for (size_t i = 0; i < y.size(); ++i)
                    d2 += (y[i] - y_exact[i]) * (y[i] - y_exact[i]);
                err[l] += std::sqrt(d2);
            }
        }
    });

    ConvergenceResult res;
    res.dts = dt_levels;
    res.errors.assign(n_levels, 0.0);
    for (long c = 0; c < n_chunks; ++c)
        for (size_t l = 0; l < n_levels; ++l) res.errors[l] += chunk_err[c][l];
    for (size_t l = 0; l < n_levels; ++l)
        res.errors[l] /= static_cast<double>(config.n_paths);

    if (res.errors.front() < 1e-12) {
        res.determined = false; // coarsest level already at round-off
        return res;
    }
    std::vector<double> lx(n_levels), ly(n_levels);
    for (size_t l = 0; l < n_levels; ++l) {
        lx[l] = std::log(res.dts[l]);
        ly[l] = std::log(res.errors[l]);
    }
    res.order = ols_fit(lx, ly).slope;
    return res;
}

} // namespace spde
