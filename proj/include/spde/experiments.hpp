#pragma once

// Experiment orchestration: validates a configuration, runs the requested
// experiment kind, and emits CSV artifacts plus a manifest that pins every
// input needed to reproduce the numbers (seed, calibrated constant, gain,
// mode counts, versions).

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spde/config.hpp"
#include "spde/control_region.hpp"
#include "spde/csv.hpp"
#include "spde/ensemble.hpp"
#include "spde/errors.hpp"
#include "spde/estimators.hpp"
#include "spde/feedback.hpp"
#include "spde/null_control.hpp"
#include "spde/sde_engine.hpp"
#include "spde/spectral_basis.hpp"

namespace spde {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<std::string> warnings;
    int exit_code = 0;

    std::optional<SpectralCalibration> calibration;
    std::optional<FeedbackLaw> law;
    std::optional<DecayFit> mean_square;
    std::optional<DecayFit> energy;
    std::optional<LyapunovSample> lyapunov;
    std::optional<double> sup_mean;
    std::optional<double> prefactor_sup; // sup_t e^{lambda t} E||y||^2 / E||y0||^2
    std::optional<ConvergenceResult> convergence;
    std::optional<ControlledRun> controlled_run;
    std::optional<NullControlPlan> plan;
};

namespace detail {

struct FitWindow {
    double lo = 0.0;
    double hi = 0.0;
};

inline FitWindow fit_window(const ExperimentConfig& cfg, double t_end) {
    FitWindow w;
    if (cfg.fit_t_hi > 0.0) {
        w.lo = cfg.fit_t_lo;
        w.hi = cfg.fit_t_hi;
    } else {
        w.lo = 0.2 * t_end;
        w.hi = t_end;
    }
    return w;
}

inline void write_fit_row(CsvWriter& csv, const std::string& quantity, const DecayFit& fit,
                          uint64_t seed) {
    csv.row({quantity, format_number(fit.exponent), format_number(fit.intercept),
             format_number(fit.r_squared), format_number(fit.t_lo), format_number(fit.t_hi),
             std::to_string(fit.n_paths), std::to_string(seed)});
}

inline void write_scalar_row(CsvWriter& csv, const std::string& quantity, double value,
                             double t_eval, long n_paths, uint64_t seed) {
    csv.row({quantity, format_number(value), format_number(0.0), format_number(1.0),
             format_number(t_eval), format_number(t_eval), std::to_string(n_paths),
             std::to_string(seed)});
}

inline void dump_trajectories(const ExperimentConfig& cfg, const SimConfig& sim,
                              const ClosedLoopDrift& drift, const ModeVector& y0,
                              const std::filesystem::path& dir) {
    long count = cfg.dump_trajectories;
    if (count == 0 && cfg.n_paths == 1) count = 1;
    count = std::min<long>(count, cfg.n_paths);
    for (long p = 0; p < count; ++p) {
        const Trajectory traj = simulate_path(sim, drift, y0, p);
        std::ostringstream header;
        header << "t,W";
        for (int k = 1; k <= sim.truncation; ++k) header << ",y_" << k;
        header << ",norm_sq";
        CsvWriter csv(dir / ("trajectory_" + std::to_string(p) + ".csv"), header.str());
        for (size_t k = 0; k < traj.times.size(); ++k) {
            std::vector<std::string> cells;
            cells.push_back(format_number(traj.times[k]));
            cells.push_back(format_number(traj.brownian[k]));
            for (double v : traj.states[k]) cells.push_back(format_number(v));
            cells.push_back(format_number(norm_sq(traj.states[k])));
            csv.row(cells);
        }
    }
}

inline void write_gram_csv(const SpectralCalibration& cal, const std::filesystem::path& dir) {
    CsvWriter csv(dir / "gram.csv", "lambda,N_lambda,lambda_min,bound");
    for (const auto& s : cal.samples)
        csv.row({format_number(s.lambda), std::to_string(s.n_low), format_number(s.lambda_min),
                 format_number(spectral_bound(cal.constant_C, s.lambda))});
}

inline void write_manifest(const ExperimentResult& res, const std::filesystem::path& dir,
                           const std::vector<std::pair<std::string, std::string>>& derived) {
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw validation_error("cannot open manifest in " + dir.string());
    out << "# spde-stab run manifest\n";
    out << "version = " << kVersion << "\n\n";
    out << serialize_config(res.config);
    out << "\n# derived\n";
    for (const auto& [k, v] : derived) out << k << " = " << v << '\n';
    for (const auto& w : res.warnings) out << "warning = " << w << '\n';
}

} // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult res;
    res.config = cfg;

    const Domain1D domain(cfg.length);
    const EigenBasis basis(domain, cfg.truncation);
    SimConfig sim = cfg.sim();
    sim.validate();
    if (sim.a == 0.0)
        res.warnings.push_back("a = 0: deterministic oracle mode, no noise on any path");

    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);

    std::vector<std::pair<std::string, std::string>> derived;
    derived.emplace_back("tau_1", format_number(basis.eigenvalues.front()));
    const int workers = resolve_workers(cfg.workers);
    derived.emplace_back("workers_resolved", std::to_string(workers));

    std::optional<ControlRegion> region;
    if (!cfg.region.empty()) region = ControlRegion::parse(cfg.region, domain);

    // Closed-loop setup shared by several kinds.
    std::optional<ClosedLoopDrift> drift;
    if (region && cfg.kind != ExperimentKind::gram_report &&
        cfg.kind != ExperimentKind::null_control) {
        std::vector<double> grid = cfg.lambda_grid;
        bool has_lambda = false;
        for (double l : grid)
            if (std::abs(l - cfg.lambda) <= 1e-12 * std::max(1.0, cfg.lambda)) has_lambda = true;
        if (!has_lambda) grid.push_back(cfg.lambda);
        res.calibration = calibrate_spectral_constant(*region, basis, grid);
        res.law = build_feedback(cfg.lambda, *region, basis, *res.calibration);
        if (!rate_hypothesis_holds(cfg.lambda, basis, cfg.a, cfg.c)) {
            std::ostringstream os;
            os << "lambda: " << cfg.lambda << " must exceed max{2 tau_1, a^2 + 2c} = "
               << std::max(2.0 * basis.eigenvalues.front(), cfg.a * cfg.a + 2.0 * cfg.c);
            throw validation_error(os.str());
        }
        drift = closed_loop_drift(*res.law, cfg.c, basis);
        derived.emplace_back("constant_C", format_number(res.calibration->constant_C));
        derived.emplace_back("N_lambda", std::to_string(res.law->n_low));
        derived.emplace_back("gamma_lambda", format_number(res.law->gain));
    } else if (cfg.kind != ExperimentKind::gram_report &&
               cfg.kind != ExperimentKind::null_control) {
        drift = uncontrolled_drift(basis, cfg.c);
    }

    if (drift) {
        const double rho = spectral_radius(*drift);
        derived.emplace_back("spectral_radius", format_number(rho));
        if (sim.scheme != Scheme::exact_transform && sim.dt > 0.1 / rho) {
            std::ostringstream os;
            os << "dt: explicit scheme needs dt <= 0.1/rho(A) = " << 0.1 / rho
               << "; shrink dt or use scheme = exact_transform";
            throw validation_error(os.str());
        }
        // modes beyond M decay in mean square at 2 tau_{M+1} - 2c - a^2; warn
        // when the truncation could mask tails slower than the target rate
        const double tail_rate =
            2.0 * eigenvalue(cfg.truncation + 1, domain) - 2.0 * cfg.c - cfg.a * cfg.a;
        if (res.law && tail_rate < cfg.lambda) {
            std::ostringstream os;
            os << "truncation: dropped modes decay at " << tail_rate
               << " < lambda; increase M to keep the truncation bias below the target rate";
            res.warnings.push_back(os.str());
        }
    }

    const ModeVector y0 = parse_initial_state(cfg.y0, cfg.truncation);

    switch (cfg.kind) {
        case ExperimentKind::uncontrolled:
        case ExperimentKind::closed_loop: {
            const detail::FitWindow win = detail::fit_window(cfg, sim.t_end);
            const EnsembleStats stats = run_ensemble(sim, *drift, y0, workers, cfg.sup_from);
            res.mean_square = fit_mean_square_decay(stats, win.lo, win.hi);
            if (!res.mean_square->reliable)
                res.warnings.push_back("mean-square fit has r^2 < 0.9 (unreliable window?)");
            CsvWriter csv(dir / "decay.csv", "quantity,exponent,intercept,r2,t_lo,t_hi,n_paths,seed");
            detail::write_fit_row(csv, "mean_square", *res.mean_square, cfg.seed);
            if (res.law) {
                res.energy = feedback_energy(stats, *res.law, win.lo, win.hi);
                detail::write_fit_row(csv, "feedback_energy", *res.energy, cfg.seed);
                if (!res.energy->reliable)
                    res.warnings.push_back("feedback-energy fit has r^2 < 0.9");
                // prefactor diagnostic sup_t e^{lambda t} E||y||^2 / E||y0||^2
                double pref = 0.0;
                const double m0 = stats.mean_norm_sq.front();
                for (size_t k = 0; k < stats.times.size(); ++k) {
                    if (!(stats.mean_norm_sq[k] > 0.0)) continue;
                    const double v = std::exp(cfg.lambda * stats.times[k] +
                                              std::log(stats.mean_norm_sq[k] / m0));
                    pref = std::max(pref, v);
                }
                res.prefactor_sup = pref;
                derived.emplace_back("prefactor_sup", format_number(pref));
            }
            res.sup_mean = sup_statistic(stats);
            derived.emplace_back("sup_mean", format_number(*res.sup_mean));
            detail::dump_trajectories(cfg, sim, *drift, y0, dir);
            if (res.calibration) detail::write_gram_csv(*res.calibration, dir);
            break;
        }

        case ExperimentKind::as_exponent: {
            const double t_eval = cfg.t_eval > 0.0 ? cfg.t_eval : cfg.t_end;
            const double expected =
                res.law ? cfg.lambda
                        : std::abs(2.0 * (basis.eigenvalues.front() - cfg.c) + cfg.a * cfg.a);
            if (2.0 * std::log(t_eval) / t_eval >= 0.1 * expected) {
                std::ostringstream os;
                os << "t_eval: too small, transient term 2 log(t)/t = "
                   << 2.0 * std::log(t_eval) / t_eval << " is not below 10% of the expected rate "
                   << expected;
                throw validation_error(os.str());
            }
            const EnsembleStats stats = run_ensemble(sim, *drift, y0, workers, cfg.sup_from);
            res.lyapunov = estimate_as_exponent(stats, t_eval);
            if (res.lyapunov->n_excluded > 0)
                res.warnings.push_back(std::to_string(res.lyapunov->n_excluded) +
                                       " path(s) underflowed to zero norm and were excluded");
            res.sup_mean = sup_statistic(stats);
            CsvWriter csv(dir / "decay.csv", "quantity,exponent,intercept,r2,t_lo,t_hi,n_paths,seed");
            detail::write_scalar_row(csv, "as_exponent_mean", res.lyapunov->mean, t_eval,
                                     stats.n_paths, cfg.seed);
            detail::write_scalar_row(csv, "as_exponent_max", res.lyapunov->max, t_eval,
                                     stats.n_paths, cfg.seed);
            detail::write_scalar_row(csv, "as_exponent_p95", res.lyapunov->p95, t_eval,
                                     stats.n_paths, cfg.seed);
            derived.emplace_back("sup_mean", format_number(*res.sup_mean));
            detail::dump_trajectories(cfg, sim, *drift, y0, dir);
            if (res.calibration) detail::write_gram_csv(*res.calibration, dir);
            break;
        }

        case ExperimentKind::convergence: {
            res.convergence = convergence_order(sim, *drift, y0, cfg.dt_levels, workers);
            CsvWriter lvl(dir / "convergence.csv", "dt,strong_error");
            for (size_t l = 0; l < res.convergence->dts.size(); ++l)
                lvl.row({format_number(res.convergence->dts[l]),
                         format_number(res.convergence->errors[l])});
            CsvWriter csv(dir / "decay.csv", "quantity,exponent,intercept,r2,t_lo,t_hi,n_paths,seed");
            if (res.convergence->determined) {
                detail::write_scalar_row(csv, "strong_order_" + cfg.scheme,
                                         res.convergence->order, sim.t_end, cfg.n_paths, cfg.seed);
            } else {
                res.warnings.push_back("convergence order undetermined: coarsest error below 1e-12");
            }
            break;
        }

        case ExperimentKind::null_control: {
            if (!region) throw validation_error("region: required for null_control");
            const SpectralCalibration base =
                calibrate_spectral_constant(*region, basis, cfg.lambda_grid);
            PlanOptions opts;
            opts.gamma_override = cfg.plan_gamma;
            opts.enforce_gamma_bound = cfg.plan_enforce_gamma_bound;
            res.plan = build_plan(cfg.plan_T, base, *region, basis, cfg.a, cfg.c, cfg.plan_n_max,
                                  opts);
            if (!res.plan->gamma_bound_ok)
                res.warnings.push_back("uncertified plan: Gamma violates the defining inequality; "
                                       "decay is still checked against the per-segment bounds");
            res.controlled_run = run_plan(*res.plan, sim, y0, workers);
            res.calibration = res.plan->calibration;
            derived.emplace_back("constant_C", format_number(res.plan->calibration.constant_C));
            derived.emplace_back("Gamma", format_number(res.plan->gamma));
            derived.emplace_back("n_T", std::to_string(res.plan->n_first));
            derived.emplace_back("active_horizon", format_number(res.plan->active_horizon));
            derived.emplace_back("terminal_moment", format_number(res.controlled_run->terminal_moment));
            CsvWriter csv(dir / "plan.csv",
                          "n,T_n,lambda_n,N_lambda,gamma_lambda,E_norm_sq_at_Tn,segment_energy,"
                          "cumulative_energy,bound_value");
            for (const auto& s : res.controlled_run->segments)
                csv.row({std::to_string(s.n), format_number(s.t_start), format_number(s.lambda),
                         std::to_string(s.n_low), format_number(s.gamma_lambda),
                         format_number(s.moment_at_start), format_number(s.segment_energy),
                         format_number(s.cumulative_energy),
                         format_number(s.bound_factor * s.moment_at_start)});
            detail::write_gram_csv(res.plan->calibration, dir);
            break;
        }

        case ExperimentKind::gram_report: {
            if (!region) throw validation_error("region: required for gram_report");
            res.calibration = calibrate_spectral_constant(*region, basis, cfg.lambda_grid);
            derived.emplace_back("constant_C", format_number(res.calibration->constant_C));
            // per-prefix certificates: shows whether the constant settles as
            // the grid grows (diagnostic only, nothing is asserted)
            for (size_t k = 1; k <= cfg.lambda_grid.size(); ++k) {
                const std::vector<double> prefix(cfg.lambda_grid.begin(),
                                                 cfg.lambda_grid.begin() + k);
                const SpectralCalibration ck =
                    calibrate_spectral_constant(*region, basis, prefix);
                derived.emplace_back("constant_C_grid_" + std::to_string(k),
                                     format_number(ck.constant_C));
            }
            detail::write_gram_csv(*res.calibration, dir);
            break;
        }
    }

    detail::write_manifest(res, dir, derived);
    if (cfg.strict) {
        const bool unreliable = (res.mean_square && !res.mean_square->reliable) ||
                                (res.energy && !res.energy->reliable);
        if (unreliable) res.exit_code = 4;
    }
    return res;
}

} // namespace spde
