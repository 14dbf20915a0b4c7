// Direct validation of a closure against the microscopic dynamics: integrate
// every member of an initial ensemble under the exact Hamiltonian flow and
// compare the empirical macrostate trajectory with the reduced-model
// prediction. Trajectories are partitioned into the batch-means batches;
// each batch is processed serially by one worker, so results are bitwise
// independent of the thread count.

#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "bestfit/closure.hpp"
#include "bestfit/errors.hpp"
#include "bestfit/integrators.hpp"
#include "bestfit/stat_model.hpp"
#include "bestfit/stats.hpp"

namespace bestfit {

struct EmpiricalSeries {
    std::vector<double> times;
    MatrixXd a_mean;  // m x K
    MatrixXd a_se;    // m x K batch-means standard errors
    VectorXd h_mean;  // K ensemble-mean energies
    VectorXd h_se;
    std::vector<MatrixXd> batch_a;  // per-batch means, m x K each
    long long dropped = 0;
    long long total = 0;

    int size() const { return static_cast<int>(times.size()); }
};

struct ValidationReport {
    std::vector<double> times;
    MatrixXd empirical_a, empirical_se, closure_a;
    MatrixXd z_scores;
    double max_z_score = 0.0;
    double plateau_value = 0.0;     // production proxy -lambda0*(da/dt) at t = 0
    double plateau_value_se = 0.0;
    double plateau_slope = 0.0;     // fitted initial slope of the proxy
    double mean_energy_drift = 0.0;
    long long dropped = 0;
    long long total = 0;
};

// Integrate each ensemble member and return the empirical observable means on
// the strided output grid. Trajectories that blow up are dropped whole; more
// than 0.1% drops aborts the run.
inline EmpiricalSeries propagate_ensemble(const PhaseSystem& sys, const EnsembleSample& sample0,
                                          double dt, double horizon, int stride = 1,
                                          int threads = 0) {
    if (dt <= 0 || horizon < dt) {
        throw std::invalid_argument("propagate_ensemble: need dt > 0 and horizon >= dt");
    }
    if (stride < 1) throw std::invalid_argument("propagate_ensemble: stride must be >= 1");
    const int m = sys.num_observables();
    const int n_traj = sample0.count();
    const auto steps = static_cast<long long>(std::llround(horizon / dt));
    const auto n_out = static_cast<int>(steps / stride) + 1;

    auto ranges = batch_ranges(n_traj);
    const int n_batches = static_cast<int>(ranges.size());

    struct BatchAccum {
        MatrixXd a_sum;
        VectorXd h_sum;
        long long live = 0;
        long long dropped = 0;
    };
    std::vector<BatchAccum> acc(n_batches);

    std::atomic<int> next_batch{0};
    auto worker = [&]() {
        MatrixXd a_traj(m, n_out);
        VectorXd h_traj(n_out);
        for (;;) {
            const int b = next_batch.fetch_add(1);
            if (b >= n_batches) return;
            BatchAccum local;
            local.a_sum = MatrixXd::Zero(m, n_out);
            local.h_sum = VectorXd::Zero(n_out);
            for (int i = ranges[b].first; i < ranges[b].second; ++i) {
                VectorXd z = sample0.points.col(i);
                bool alive = true;
                int out = 0;
                for (long long s = 0; s <= steps; ++s) {
                    if (s % stride == 0) {
                        for (int k = 0; k < m; ++k) a_traj(k, out) = sys.observables[k].value(z);
                        h_traj[out] = sys.hamiltonian(z);
                        ++out;
                    }
                    if (s == steps) break;
                    micro_step(sys, z, dt);
                    if (!z.allFinite() || z.lpNorm<Eigen::Infinity>() > 1e12) {
                        alive = false;
                        break;
                    }
                }
                if (alive) {
                    local.a_sum += a_traj;
                    local.h_sum += h_traj;
                    ++local.live;
                } else {
                    ++local.dropped;
                }
            }
            acc[b] = std::move(local);
        }
    };

    int n_threads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, n_batches));
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    EmpiricalSeries out;
    out.total = n_traj;
    out.times.resize(n_out);
    for (int k = 0; k < n_out; ++k) out.times[k] = k * stride * dt;
    MatrixXd a_total = MatrixXd::Zero(m, n_out);
    VectorXd h_total = VectorXd::Zero(n_out);
    long long live_total = 0;
    out.batch_a.reserve(n_batches);
    MatrixXd batch_means_a(n_batches, m * n_out);
    MatrixXd batch_means_h(n_batches, n_out);
    for (int b = 0; b < n_batches; ++b) {
        out.dropped += acc[b].dropped;
        live_total += acc[b].live;
        a_total += acc[b].a_sum;
        h_total += acc[b].h_sum;
        const double denom = std::max<long long>(acc[b].live, 1);
        MatrixXd bm = acc[b].a_sum / denom;
        out.batch_a.push_back(bm);
        batch_means_a.row(b) = Eigen::Map<VectorXd>(bm.data(), m * n_out);
        batch_means_h.row(b) = (acc[b].h_sum / denom).transpose();
    }
    if (out.dropped > 0 && out.dropped * 1000 > out.total) {
        throw SamplingError("propagate_ensemble: " + std::to_string(out.dropped) + " of " +
                            std::to_string(out.total) + " trajectories blew up (> 0.1%)");
    }
    if (live_total == 0) throw SamplingError("propagate_ensemble: no live trajectories");
    out.a_mean = a_total / live_total;
    out.h_mean = h_total / live_total;
    VectorXd se_a = stderr_from_batches(batch_means_a);
    out.a_se = Eigen::Map<MatrixXd>(se_a.data(), m, n_out);
    out.h_se = stderr_from_batches(batch_means_h);
    return out;
}

// Compare a closure trajectory with the empirical series on a shared grid.
inline ValidationReport validate(const ReducedTrajectory& closure, const EmpiricalSeries& emp) {
    const int k_pts = emp.size();
    if (closure.size() != k_pts) {
        throw ValidationError("validate: closure has " + std::to_string(closure.size()) +
                              " points but the empirical series has " + std::to_string(k_pts));
    }
    for (int k = 0; k < k_pts; ++k) {
        if (std::abs(closure.times[k] - emp.times[k]) > 1e-9 * (1.0 + std::abs(emp.times[k]))) {
            throw ValidationError("validate: time grids disagree at index " + std::to_string(k));
        }
    }
    const int m = static_cast<int>(emp.a_mean.rows());
    ValidationReport rep;
    rep.times = emp.times;
    rep.empirical_a = emp.a_mean;
    rep.empirical_se = emp.a_se;
    rep.dropped = emp.dropped;
    rep.total = emp.total;
    rep.closure_a.resize(m, k_pts);
    for (int k = 0; k < k_pts; ++k) rep.closure_a.col(k) = closure.a_path[k];
    rep.z_scores.resize(m, k_pts);
    for (int k = 0; k < k_pts; ++k) {
        for (int i = 0; i < m; ++i) {
            const double se = std::max(emp.a_se(i, k), 1e-300);
            rep.z_scores(i, k) = std::abs(emp.a_mean(i, k) - rep.closure_a(i, k)) / se;
        }
    }
    rep.max_z_score = rep.z_scores.maxCoeff();
    rep.mean_energy_drift = (emp.h_mean.array() - emp.h_mean[0]).abs().maxCoeff();

    // entropy-production proxy -lambda(t) * (da_emp/dt)(t): value at t = 0
    // with batch-means error, and its initial least-squares slope
    if (k_pts >= 2) {
        const double h01 = emp.times[1] - emp.times[0];
        VectorXd per_batch(static_cast<Eigen::Index>(emp.batch_a.size()));
        for (std::size_t b = 0; b < emp.batch_a.size(); ++b) {
            const VectorXd rate0 = (emp.batch_a[b].col(1) - emp.batch_a[b].col(0)) / h01;
            per_batch[static_cast<Eigen::Index>(b)] = -closure.lambda_path[0].dot(rate0);
        }
        rep.plateau_value = per_batch.mean();
        MatrixXd bm = per_batch;
        rep.plateau_value_se = stderr_from_batches(bm)[0];

        const double window = closure.t_char > 0 ? 0.1 * closure.t_char
                                                 : emp.times.back() * 0.1;
        std::vector<double> ts, proxy;
        for (int k = 1; k + 1 < k_pts; ++k) {
            if (emp.times[k] > window && static_cast<int>(ts.size()) >= 3) break;
            const double span = emp.times[k + 1] - emp.times[k - 1];
            const VectorXd rate = (emp.a_mean.col(k + 1) - emp.a_mean.col(k - 1)) / span;
            ts.push_back(emp.times[k]);
            proxy.push_back(-closure.lambda_path[k].dot(rate));
        }
        if (ts.size() >= 2) rep.plateau_slope = lsq_slope(ts, proxy);
    }
    return rep;
}

}  // namespace bestfit
