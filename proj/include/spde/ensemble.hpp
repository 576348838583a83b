#pragma once

// Parallel ensemble execution with a determinism contract: results are
// byte-identical for any worker count. Paths are processed in fixed chunks of
// 64; per-grid-point sums are accumulated sequentially inside each chunk and
// the chunk partials are reduced in chunk order after all workers join, so
// floating-point summation order never depends on scheduling.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "spde/errors.hpp"
#include "spde/sde_engine.hpp"

namespace spde {

inline constexpr long kEnsembleChunk = 64;

inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(chunk_index) over [0, n_chunks) on `workers` threads; the first
// exception (lowest chunk index) is rethrown after all threads join.
inline void parallel_chunks(long n_chunks, int workers, const std::function<void(long)>& fn) {
    workers = std::min<long>(std::max(workers, 1), std::max<long>(n_chunks, 1));
    if (workers == 1) {
        for (long c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::atomic<long> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    long first_error_chunk = std::numeric_limits<long>::max();
    auto body = [&]() {
        while (true) {
            const long c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                fn(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (c < first_error_chunk) {
                    first_error_chunk = c;
                    first_error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct EnsembleStats {
    std::vector<double> times;
    std::vector<double> mean_norm_sq;      // E ||y(t_k)||^2
    std::vector<double> mean_low_sq;       // E ||P_N y(t_k)||^2
    std::vector<double> final_log_norm_sq; // per path, log ||y(T)||^2 (-inf on underflow to 0)
    std::vector<double> sup_norm_sq;       // per path, sup over grid points with t >= sup_from
    long n_paths = 0;
    double sup_from = 0.0;
    double t_end = 0.0;
};

inline EnsembleStats run_ensemble(const SimConfig& config, const ClosedLoopDrift& drift,
                                  const ModeVector& y0, int workers, double sup_from = 0.0) {
    config.validate();
    if (static_cast<int>(y0.size()) != drift.matrix.rows())
        throw validation_error("ensemble: y0 does not match drift dimension");

    EnsembleStats st;
    st.times = make_time_grid(config.t_end, config.dt);
    st.n_paths = config.n_paths;
    st.sup_from = sup_from;
    st.t_end = config.t_end;
    const size_t n_points = st.times.size();
    st.final_log_norm_sq.assign(config.n_paths, 0.0);
    st.sup_norm_sq.assign(config.n_paths, 0.0);

    const long n_chunks = (config.n_paths + kEnsembleChunk - 1) / kEnsembleChunk;
    std::vector<std::vector<double>> chunk_norm(n_chunks), chunk_low(n_chunks);

    parallel_chunks(n_chunks, resolve_workers(workers), [&](long chunk) {
        auto& sum_norm = chunk_norm[chunk];
        auto& sum_low = chunk_low[chunk];
        sum_norm.assign(n_points, 0.0);
        sum_low.assign(n_points, 0.0);
        const long lo = chunk * kEnsembleChunk;
        const long hi = std::min(config.n_paths, lo + kEnsembleChunk);
        for (long p = lo; p < hi; ++p) {
            double sup = 0.0;
            double final_nsq = 0.0;
            ModeVector y = y0;
            double w = 0.0;
            run_path_on_grid(drift, config.scheme, config.a, config.seed, p, 0, st.times, y, w,
                             [&](size_t k, double t, double, const ModeVector& yk) {
                                 const double nsq = norm_sq(yk);
                                 sum_norm[k] += nsq;
                                 sum_low[k] += low_norm_sq(yk, drift.n_low);
                                 if (t >= sup_from && nsq > sup) sup = nsq;
                                 if (k + 1 == n_points) final_nsq = nsq;
                             });
            st.sup_norm_sq[p] = sup;
            st.final_log_norm_sq[p] = std::log(final_nsq);
        }
    });

    st.mean_norm_sq.assign(n_points, 0.0);
    st.mean_low_sq.assign(n_points, 0.0);
    for (long c = 0; c < n_chunks; ++c)
        for (size_t k = 0; k < n_points; ++k) {
            st.mean_norm_sq[k] += chunk_norm[c][k];
            st.mean_low_sq[k] += chunk_low[c][k];
        }
    const double inv = 1.0 / static_cast<double>(config.n_paths);
    for (size_t k = 0; k < n_points; ++k) {
        st.mean_norm_sq[k] *= inv;
        st.mean_low_sq[k] *= inv;
    }
    return st;
}

} // namespace spde
