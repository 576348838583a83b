#pragma once

// Path simulation for the truncated closed-loop SDE
//   dy = A y dt + a y dW,   one scalar Brownian motion multiplying all modes.
// Three schemes: Euler-Maruyama, Milstein, and the exact transform
//   y(t) = exp(a (W(t)-W(t0)) - a^2 (t-t0)/2) expm(A (t-t0)) y(t0),
// which is pathwise exact because the noise is a scalar multiple of the state.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "spde/errors.hpp"
#include "spde/feedback.hpp"
#include "spde/linalg.hpp"
#include "spde/rng.hpp"
#include "spde/spectral_basis.hpp"

namespace spde {

enum class Scheme { euler_maruyama, milstein, exact_transform };

inline Scheme parse_scheme(const std::string& s) {
    if (s == "euler_maruyama") return Scheme::euler_maruyama;
    if (s == "milstein") return Scheme::milstein;
    if (s == "exact_transform") return Scheme::exact_transform;
    throw validation_error("scheme: unknown scheme '" + s + "'");
}

inline std::string format_scheme(Scheme s) {
    switch (s) {
        case Scheme::euler_maruyama: return "euler_maruyama";
        case Scheme::milstein: return "milstein";
        case Scheme::exact_transform: return "exact_transform";
    }
    return "?";
}

struct SimConfig {
    double a = 1.0;       // noise intensity; 0 only in deterministic oracle runs
    double c = 0.0;       // reaction constant
    double dt = 0.01;
    double t_end = 1.0;
    int truncation = 1;   // M
    Scheme scheme = Scheme::exact_transform;
    uint64_t seed = 12345;
    long n_paths = 1;

    void validate() const {
        if (!(dt > 0.0)) throw validation_error("dt: must be > 0");
        if (!(t_end >= dt)) throw validation_error("t_end: must be >= dt");
        if (truncation < 1) throw validation_error("truncation: must be >= 1");
        if (n_paths < 1) throw validation_error("n_paths: must be >= 1");
    }
};

// Uniform grid with spacing dt; the final step shrinks to land on t_end.
inline std::vector<double> make_time_grid(double t_end, double dt, double t0 = 0.0) {
    if (!(dt > 0.0) || !(t_end > t0)) throw validation_error("time grid: need dt > 0, t_end > t0");
    const double span = t_end - t0;
    std::vector<double> t;
    t.reserve(static_cast<size_t>(span / dt) + 2);
    for (long k = 0; k * dt < span - 1e-12 * std::max(1.0, span); ++k) t.push_back(t0 + k * dt);
    t.push_back(t_end);
    return t;
}

struct Trajectory {
    std::vector<double> times;
    std::vector<ModeVector> states;
    std::vector<double> brownian; // cumulative W(t_k)
};

inline ModeVector step_euler(const ModeVector& y, const ClosedLoopDrift& drift, double a,
                             double dt, double dW) {
    ModeVector out(y.size());
    if (drift.is_diag) {
        for (size_t k = 0; k < y.size(); ++k)
            out[k] = y[k] + drift.diag[k] * y[k] * dt + a * y[k] * dW;
    } else {
        const Vector ay = matvec(drift.matrix, y);
        for (size_t k = 0; k < y.size(); ++k) out[k] = y[k] + ay[k] * dt + a * y[k] * dW;
    }
    return out;
}

inline ModeVector step_milstein(const ModeVector& y, const ClosedLoopDrift& drift, double a,
                                double dt, double dW) {
    ModeVector out = step_euler(y, drift, a, dt, dW);
    const double corr = 0.5 * a * a * (dW * dW - dt);
    for (size_t k = 0; k < y.size(); ++k) out[k] += corr * y[k];
    return out;
}

// expm(A h) cache keyed by the exact spacing value; grids here carry at most
// a couple of distinct spacings.
class ExactPropagator {
public:
    explicit ExactPropagator(const ClosedLoopDrift& drift) : drift_(&drift) {}

    void apply(double h, const ModeVector& in, ModeVector& out) {
        if (drift_->is_diag) {
            const Vector& f = diag_factors(h);
            out.resize(in.size());
            for (size_t k = 0; k < in.size(); ++k) out[k] = f[k] * in[k];
            return;
        }
        const Matrix& phi = matrix_factor(h);
        out = matvec(phi, in);
    }

private:
    const Vector& diag_factors(double h) {
        for (auto& e : diag_cache_)
            if (e.first == h) return e.second;
        Vector f(drift_->diag.size());
        for (size_t k = 0; k < f.size(); ++k) f[k] = std::exp(drift_->diag[k] * h);
        diag_cache_.emplace_back(h, std::move(f));
        return diag_cache_.back().second;
    }

    const Matrix& matrix_factor(double h) {
        for (auto& e : mat_cache_)
            if (e.first == h) return e.second;
        Matrix ah = drift_->matrix;
        for (double& v : ah.data()) v *= h;
        mat_cache_.emplace_back(h, expm(ah));
        return mat_cache_.back().second;
    }

    const ClosedLoopDrift* drift_;
    std::vector<std::pair<double, Vector>> diag_cache_;
    std::vector<std::pair<double, Matrix>> mat_cache_;
};

namespace detail {

inline void check_finite(const ModeVector& y, double t, long path) {
    for (double v : y)
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "blow-up: non-finite state at t = " << t << " (path " << path << ")";
            throw blowup_error(os.str(), t, path);
        }
}

} // namespace detail

// Drives one path over `times` (times[0] is the start), invoking
// on_point(k, t_k, W_k, y_k) for every grid index including k = 0. The state
// and Brownian value are carried in-place so segments can be chained; step k
// draws its increment at address (seed, path, step_offset + k).
template <typename F>
void run_path_on_grid(const ClosedLoopDrift& drift, Scheme scheme, double a, uint64_t seed,
                      long path, uint64_t step_offset, const std::vector<double>& times,
                      ModeVector& y, double& w, F&& on_point) {
    const double t0 = times.front();
    const double w0 = w;
    ExactPropagator prop(drift);
    ModeVector det; // transformed (noise-free) state, exact scheme only
    if (scheme == Scheme::exact_transform) det = y;

    on_point(static_cast<size_t>(0), t0, w, static_cast<const ModeVector&>(y));
    for (size_t k = 0; k + 1 < times.size(); ++k) {
        const double h = times[k + 1] - times[k];
        const double dw = normal_draw(seed, static_cast<uint64_t>(path), step_offset + k) *
                          std::sqrt(h);
        w += dw;
        switch (scheme) {
            case Scheme::euler_maruyama:
                y = step_euler(y, drift, a, h, dw);
                break;
            case Scheme::milstein:
                y = step_milstein(y, drift, a, h, dw);
                break;
            case Scheme::exact_transform: {
                ModeVector next;
                prop.apply(h, det, next);
                det = std::move(next);
                const double t1 = times[k + 1];
                const double factor = std::exp(a * (w - w0) - 0.5 * a * a * (t1 - t0));
                y.resize(det.size());
                for (size_t i = 0; i < det.size(); ++i) y[i] = factor * det[i];
                break;
            }
        }
        detail::check_finite(y, times[k + 1], path);
        on_point(k + 1, times[k + 1], w, static_cast<const ModeVector&>(y));
    }
}

// Exact-in-distribution path for externally supplied Brownian values; the
// grid and W must have equal lengths and grid[0] is the initial time.
inline Trajectory exact_transform_path(const ModeVector& y0, const ClosedLoopDrift& drift,
                                       double a, const std::vector<double>& times,
                                       const std::vector<double>& brownian) {
    if (times.size() != brownian.size() || times.empty())
        throw validation_error("exact_transform_path: grid/brownian size mismatch");
    Trajectory traj;
    traj.times = times;
    traj.brownian = brownian;
    traj.states.reserve(times.size());
    ExactPropagator prop(drift);
    ModeVector det = y0;
    traj.states.push_back(y0);
    for (size_t k = 0; k + 1 < times.size(); ++k) {
        ModeVector next;
        prop.apply(times[k + 1] - times[k], det, next);
        det = std::move(next);
        const double factor = std::exp(a * (brownian[k + 1] - brownian[0]) -
                                       0.5 * a * a * (times[k + 1] - times[0]));
        ModeVector y(det.size());
        for (size_t i = 0; i < det.size(); ++i) y[i] = factor * det[i];
        detail::check_finite(y, times[k + 1], -1);
        traj.states.push_back(std::move(y));
    }
    return traj;
}

inline Trajectory simulate_path(const SimConfig& config, const ClosedLoopDrift& drift,
                                const ModeVector& y0, long path_index) {
    config.validate();
    if (static_cast<int>(y0.size()) != drift.matrix.rows())
        throw validation_error("simulate_path: y0 does not match drift dimension");
    Trajectory traj;
    traj.times = make_time_grid(config.t_end, config.dt);
    traj.states.reserve(traj.times.size());
    traj.brownian.reserve(traj.times.size());
    ModeVector y = y0;
    double w = 0.0;
    run_path_on_grid(drift, config.scheme, config.a, config.seed, path_index, 0, traj.times, y, w,
                     [&](size_t, double, double wk, const ModeVector& yk) {
                         traj.states.push_back(yk);
                         traj.brownian.push_back(wk);
                     });
    return traj;
}

} // namespace spde
