// Ensemble estimators for the closure coefficients: the Fisher matrix C,
// the drift f, the Poisson matrix Omega, the closure Gram matrix D, and
// their equilibrium values. All estimators come with batch-means standard
// errors and are computed from a single shared sample for covariance
// consistency.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "bestfit/errors.hpp"
#include "bestfit/linalg.hpp"
#include "bestfit/phase_system.hpp"
#include "bestfit/stat_model.hpp"
#include "bestfit/stats.hpp"

namespace bestfit {

struct WeightSpec {
    VectorXd diag;  // one non-negative weight per residual component

    static WeightSpec scalar(double w, int m) {
        if (w < 0) throw std::invalid_argument("WeightSpec: weight must be >= 0");
        return {VectorXd::Constant(m, w)};
    }
    static WeightSpec diagonal(VectorXd w) {
        if ((w.array() < 0).any()) throw std::invalid_argument("WeightSpec: weights must be >= 0");
        return {std::move(w)};
    }
};

struct ModelMatrices {
    MatrixXd c;      // Fisher / score covariance, SPD
    VectorXd f;      // drift <LA>
    MatrixXd omega;  // Poisson matrix, antisymmetric
    MatrixXd d;      // closure Gram matrix, symmetric PSD
    VectorXd lambda;

    MatrixXd c_se, omega_se, d_se;
    VectorXd f_se;
    double omega_raw_asymmetry = 0.0;  // before the exact antisymmetrization
    VectorXd f_alternative;            // beta^{-1} Omega lambda self-consistency estimator
    double f_discrepancy = 0.0;
};

struct EquilibriumConstants {
    MatrixXd c0;    // <A A*>_eq
    MatrixXd jrev;  // <(LA) A*>_eq, antisymmetric
    MatrixXd d0;    // closure matrix at lambda = 0
    MatrixXd c0_se, jrev_se, d0_se;
    double jrev_raw_asymmetry = 0.0;
};

// Everything the estimators need, evaluated once per sample point.
struct SampleEvals {
    MatrixXd a;        // m x N observable values
    VectorXd h;        // N Hamiltonian values
    MatrixXd la;       // m x N Liouville actions {A_k, H}
    MatrixXd bracket;  // (m*m) x N, column j = vec of {A_i, A_k}(z_j)
};

inline SampleEvals evaluate_sample(const PhaseSystem& sys, const MatrixXd& points) {
    const int m = sys.num_observables();
    const int n_pts = static_cast<int>(points.cols());
    SampleEvals ev;
    ev.a.resize(m, n_pts);
    ev.h.resize(n_pts);
    ev.la.resize(m, n_pts);
    ev.bracket.resize(m * m, n_pts);
    std::vector<VectorXd> grads(m);
    for (int j = 0; j < n_pts; ++j) {
        const VectorXd z = points.col(j);
        ev.h[j] = sys.hamiltonian(z);
        const VectorXd gh = sys.grad_h(z);
        for (int k = 0; k < m; ++k) {
            ev.a(k, j) = sys.observables[k].value(z);
            grads[k] = sys.observables[k].gradient(z);
            ev.la(k, j) = poisson_bracket(sys, grads[k], gh);
        }
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < m; ++k)
                ev.bracket(i + m * k, j) = poisson_bracket(sys, grads[i], grads[k]);
    }
    return ev;
}

namespace detail {

// Batch-means standard errors for the entries of (1/N) sum_j x_j y_j^T.
inline MatrixXd second_moment_se(const MatrixXd& x, const MatrixXd& y) {
    const int n_pts = static_cast<int>(x.cols());
    auto ranges = batch_ranges(n_pts);
    const Eigen::Index rows = x.rows(), cols = y.rows();
    MatrixXd bm(static_cast<Eigen::Index>(ranges.size()), rows * cols);
    for (std::size_t b = 0; b < ranges.size(); ++b) {
        const int lo = ranges[b].first, len = ranges[b].second - ranges[b].first;
        MatrixXd block = x.middleCols(lo, len) * y.middleCols(lo, len).transpose() / len;
        bm.row(static_cast<Eigen::Index>(b)) = Eigen::Map<VectorXd>(block.data(), rows * cols);
    }
    VectorXd se = stderr_from_batches(bm);
    return Eigen::Map<MatrixXd>(se.data(), rows, cols);
}

inline VectorXd row_mean_se(const MatrixXd& x) {
    const int n_pts = static_cast<int>(x.cols());
    auto ranges = batch_ranges(n_pts);
    MatrixXd bm(static_cast<Eigen::Index>(ranges.size()), x.rows());
    for (std::size_t b = 0; b < ranges.size(); ++b) {
        const int lo = ranges[b].first, len = ranges[b].second - ranges[b].first;
        bm.row(static_cast<Eigen::Index>(b)) = x.middleCols(lo, len).rowwise().mean().transpose();
    }
    return stderr_from_batches(bm);
}

inline void check_spd(const MatrixXd& c, const std::vector<Observable>& obs) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(c);
    const double floor = 1e-10 * c.trace() / c.rows();
    if (es.eigenvalues().minCoeff() <= floor) {
        Eigen::Index worst = 0;
        es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
        std::string name = worst < static_cast<Eigen::Index>(obs.size())
                               ? obs[static_cast<std::size_t>(worst)].name
                               : std::to_string(worst);
        throw SamplingError("fisher: score covariance is rank-deficient (min eigenvalue " +
                            std::to_string(es.eigenvalues().minCoeff()) +
                            ", null direction dominated by '" + name + "')");
    }
}

}  // namespace detail

// Fisher matrix: empirical second moment of the score vectors.
inline MatrixXd fisher(const StatModel& model, const EnsembleSample& sample,
                       MatrixXd* se = nullptr) {
    MatrixXd u = score(model, sample);
    MatrixXd c = symmetrize(u * u.transpose() / u.cols());
    detail::check_spd(c, model.system.observables);
    if (se) *se = detail::second_moment_se(u, u);
    return c;
}

// Drift f = <LA>. The fixed-energy score projection leaves LA unchanged
// pointwise (L annihilates H and constants), so both variants share this
// estimator. The exponential-family identity f = beta^{-1} Omega lambda
// provides the self-consistency alternative.
inline VectorXd drift(const StatModel& model, const EnsembleSample& sample,
                      const SampleEvals& ev, VectorXd* se = nullptr) {
    (void)sample;
    if (se) *se = detail::row_mean_se(ev.la);
    return ev.la.rowwise().mean();
}

// Poisson matrix Omega = <{A, A*}>, antisymmetrized.
inline MatrixXd poisson_matrix(const SampleEvals& ev, MatrixXd* se = nullptr,
                               double* raw_asym = nullptr) {
    const int m = static_cast<int>(ev.a.rows());
    VectorXd mean = ev.bracket.rowwise().mean();
    MatrixXd omega = Eigen::Map<MatrixXd>(mean.data(), m, m);
    if (raw_asym) *raw_asym = symmetry_defect(omega);
    if (se) {
        VectorXd flat_se = detail::row_mean_se(ev.bracket);
        *se = Eigen::Map<MatrixXd>(flat_se.data(), m, m);
    }
    return antisymmetrize(omega);
}

// Closure matrix D: second moment of the residual of LA after regression on
// the score span, scaled by the weights.
inline MatrixXd closure_matrix(const StatModel& model, const EnsembleSample& sample,
                               const SampleEvals& ev, const WeightSpec& weights,
                               MatrixXd* se = nullptr) {
    const int m = model.system.num_observables();
    if (weights.diag.size() != m) {
        throw std::invalid_argument("closure_matrix: weight count must match observables");
    }
    MatrixXd u = score(model, sample);
    MatrixXd c = symmetrize(u * u.transpose() / u.cols());
    detail::check_spd(c, model.system.observables);
    MatrixXd cov_la_u = ev.la * u.transpose() / u.cols();
    MatrixXd coef = c.llt().solve(cov_la_u.transpose()).transpose();
    MatrixXd resid = ev.la - coef * u;
    resid = weights.diag.asDiagonal() * resid;
    MatrixXd d = symmetrize(resid * resid.transpose() / resid.cols());
    if (se) *se = detail::second_moment_se(resid, resid);
    return project_psd(d).projected;
}

// All coefficient objects from one shared sample.
inline ModelMatrices estimate_matrices(const StatModel& model, const EnsembleSample& sample,
                                       const WeightSpec& weights) {
    ModelMatrices out;
    out.lambda = model.lambda;
    SampleEvals ev = evaluate_sample(model.system, sample.points);
    out.c = fisher(model, sample, &out.c_se);
    out.f = drift(model, sample, ev, &out.f_se);
    out.omega = poisson_matrix(ev, &out.omega_se, &out.omega_raw_asymmetry);
    out.d = closure_matrix(model, sample, ev, weights, &out.d_se);
    out.f_alternative = out.omega * model.lambda / model.beta_of_lambda;
    out.f_discrepancy = (out.f - out.f_alternative).norm();
    return out;
}

// Equilibrium constants at lambda = 0; call after normalize_observables.
inline EquilibriumConstants equilibrium_constants(const PhaseSystem& sys,
                                                  const EnsembleSample& eq_sample,
                                                  const WeightSpec& weights) {
    EquilibriumConstants out;
    SampleEvals ev = evaluate_sample(sys, eq_sample.points);
    const int m = sys.num_observables();
    MatrixXd ac = ev.a.colwise() - ev.a.rowwise().mean().eval();
    out.c0 = symmetrize(ac * ac.transpose() / ac.cols());
    detail::check_spd(out.c0, sys.observables);
    out.c0_se = detail::second_moment_se(ac, ac);

    MatrixXd j_raw = ev.la * ac.transpose() / ac.cols();
    out.jrev_raw_asymmetry = symmetry_defect(j_raw);
    out.jrev = antisymmetrize(j_raw);
    out.jrev_se = detail::second_moment_se(ev.la, ac);

    // scores at equilibrium are the centered observables
    if (weights.diag.size() != m) {
        throw std::invalid_argument("equilibrium_constants: weight count must match observables");
    }
    MatrixXd cov_la_u = ev.la * ac.transpose() / ac.cols();
    MatrixXd coef = out.c0.llt().solve(cov_la_u.transpose()).transpose();
    MatrixXd resid = ev.la - coef * ac;
    resid = weights.diag.asDiagonal() * resid;
    out.d0 = project_psd(symmetrize(resid * resid.transpose() / resid.cols())).projected;
    out.d0_se = detail::second_moment_se(resid, resid);
    return out;
}

}  // namespace bestfit
