// Solvers for the value-function Hessian. The stationary Hessian M solves
//
//     M C^{-1} M + J C^{-1} M - M C^{-1} J = D,
//
// the unique symmetric PSD solution; the nonstationary Hessian M(t) solves
// the matching Riccati differential equation with M(0) = 0 and relaxes to
// the stationary solution.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "bestfit/errors.hpp"
#include "bestfit/linalg.hpp"

namespace bestfit {

struct ValueHessian {
    MatrixXd m;
    double residual_norm = 0.0;
    MatrixXd c, jrev, d;         // the inputs that produced m
    bool limit_converged = false;  // true when the ODE-limit fallback was used
};

inline double riccati_residual(const MatrixXd& c, const MatrixXd& j, const MatrixXd& d,
                               const MatrixXd& m) {
    // -M C^{-1} J = +(J C^{-1} M)^T for antisymmetric J
    MatrixXd cim = c.ldlt().solve(m);
    return (m * cim + j * cim + (j * cim).transpose() - d).norm();
}

// Sampled solution of the Riccati ODE with cubic-Hermite evaluation between
// nodes (the stored derivatives make the interpolant 4th-order accurate).
struct RiccatiTrajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<MatrixXd> values;
    std::vector<MatrixXd> derivatives;

    double horizon() const { return times.empty() ? 0.0 : times.back(); }

    const MatrixXd& final() const {
        if (values.empty()) throw SolverError("RiccatiTrajectory: empty");
        return values.back();
    }

    MatrixXd eval(double t) const {
        if (times.size() < 2) throw SolverError("RiccatiTrajectory: need at least two nodes");
        const double t0 = times.front(), t1 = times.back();
        if (t < t0 - 1e-12 || t > t1 + 1e-9 * (1.0 + std::abs(t1))) {
            throw ValidationError("RiccatiTrajectory: t = " + std::to_string(t) +
                                  " outside the stored grid [" + std::to_string(t0) + ", " +
                                  std::to_string(t1) + "]");
        }
        const double step = times[1] - times[0];
        auto k = static_cast<std::size_t>(std::floor((t - t0) / step));
        if (k >= times.size() - 1) k = times.size() - 2;
        const double h = times[k + 1] - times[k];  // final interval may be shorter
        const double s = (t - times[k]) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * values[k] + (h10 * h) * derivatives[k] + h01 * values[k + 1] +
               (h11 * h) * derivatives[k + 1];
    }
};

namespace detail {

// dM/dt = D - M C^{-1} M - J C^{-1} M + M C^{-1} J; the J terms combine to
// -(JT + (JT)^T) with T = C^{-1} M, keeping the derivative exactly symmetric.
struct RiccatiRhs {
    const MatrixXd& d;
    const MatrixXd& j;
    const Eigen::LLT<MatrixXd>& c_llt;

    MatrixXd operator()(const MatrixXd& m) const {
        MatrixXd t = c_llt.solve(m);
        MatrixXd jt = j * t;
        return d - m * t - jt - jt.transpose();
    }
};

}  // namespace detail

// Fixed-step RK4 on the Riccati ODE, symmetrizing each step and projecting
// stray negative eigenvalues (>= -1e-12 after scaling) back to zero.
inline RiccatiTrajectory solve_riccati_ode(const MatrixXd& c, const MatrixXd& jrev,
                                           const MatrixXd& d, double horizon, double dt,
                                           int store_every = 1) {
    if (horizon <= 0 || dt <= 0) {
        throw std::invalid_argument("solve_riccati_ode: need horizon > 0 and dt > 0");
    }
    Eigen::LLT<MatrixXd> c_llt(symmetrize(c));
    if (c_llt.info() != Eigen::Success) {
        throw SolverError("solve_riccati_ode: C is not positive-definite");
    }
    const MatrixXd dsym = symmetrize(d);
    const MatrixXd janti = antisymmetrize(jrev);
    detail::RiccatiRhs rhs{dsym, janti, c_llt};

    const auto steps = static_cast<long long>(std::llround(horizon / dt));
    const double scale = 1.0 + dsym.norm();
    MatrixXd m = MatrixXd::Zero(c.rows(), c.cols());
    RiccatiTrajectory traj;
    traj.dt = dt * store_every;
    traj.times.push_back(0.0);
    traj.values.push_back(m);
    traj.derivatives.push_back(rhs(m));
    MatrixXd k1, k2, k3, k4;
    for (long long step = 1; step <= steps; ++step) {
        k1 = rhs(m);
        k2 = rhs(m + 0.5 * dt * k1);
        k3 = rhs(m + 0.5 * dt * k2);
        k4 = rhs(m + dt * k3);
        m += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        m = symmetrize(m);
        if (m.norm() > 1e8 * scale) {
            throw SolverError("solve_riccati_ode: solution norm exceeded 1e8 at t = " +
                              std::to_string(step * dt) + "; reduce dt");
        }
        // cheap positive-definiteness probe; eigen-clip only when it fails
        if (Eigen::LLT<MatrixXd>(m + 1e-14 * scale * MatrixXd::Identity(m.rows(), m.cols()))
                .info() != Eigen::Success) {
            auto proj = project_psd(m);
            if (proj.min_eigenvalue < -1e-10 * scale) {
                throw SolverError("solve_riccati_ode: lost positive semidefiniteness "
                                  "(min eigenvalue " +
                                  std::to_string(proj.min_eigenvalue) + "); reduce dt");
            }
            m = proj.projected;
        }
        if (step % store_every == 0 || step == steps) {
            traj.times.push_back(step * dt);
            traj.values.push_back(m);
            traj.derivatives.push_back(rhs(m));
        }
    }
    return traj;
}

// Characteristic relaxation time sqrt(C-scale / D-scale) from the slowest
// relative eigenvalue of D against C.
inline double characteristic_time(const MatrixXd& c, const MatrixXd& d) {
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(symmetrize(d), symmetrize(c),
                                                           Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    const double gmin = ges.eigenvalues().minCoeff();
    const double gmax = ges.eigenvalues().maxCoeff();
    if (gmax <= 0) return std::numeric_limits<double>::infinity();
    return 1.0 / std::sqrt(std::max(gmin, 1e-12 * gmax));
}

// Stationary solve via the stable invariant subspace of the extremal-flow
// matrix. After whitening by C^{-1/2} the equation becomes
// Mw^2 + Jw Mw - Mw Jw = Dw, whose stabilizing solution is read off the
// eigenvectors of Zw = [[Jw, I], [Dw, Jw]] with negative real part; a Newton
// polish (Sylvester correction) then drives the residual to roundoff. When no
// m-dimensional stable subspace exists (singular D), integrates the Riccati
// ODE to its limit and flags the result.
inline ValueHessian solve_are(const MatrixXd& c, const MatrixXd& jrev, const MatrixXd& d) {
    const Eigen::Index m = c.rows();
    ValueHessian out;
    out.c = symmetrize(c);
    out.jrev = antisymmetrize(jrev);
    out.d = symmetrize(d);

    SpdSqrt cs = spd_sqrt(out.c, "solve_are: C");
    const MatrixXd dw = symmetrize(cs.inv_sqrt * out.d * cs.inv_sqrt);
    const MatrixXd jw = antisymmetrize(cs.inv_sqrt * out.jrev * cs.inv_sqrt);
    const double scale = 1.0 + dw.norm();

    MatrixXd mw;
    bool have_subspace = false;
    if (jw.norm() <= 1e-13 * scale) {
        // J = 0: the whitened solution is the PSD square root of Dw
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(dw);
        VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        mw = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        have_subspace = true;
    } else {
        MatrixXd zw(2 * m, 2 * m);
        zw.topLeftCorner(m, m) = jw;
        zw.topRightCorner(m, m) = MatrixXd::Identity(m, m);
        zw.bottomLeftCorner(m, m) = dw;
        zw.bottomRightCorner(m, m) = jw;
        Eigen::EigenSolver<MatrixXd> es(zw);
        if (es.info() == Eigen::Success) {
            const auto& evals = es.eigenvalues();
            std::vector<Eigen::Index> stable;
            for (Eigen::Index i = 0; i < evals.size(); ++i) {
                if (evals[i].real() < -1e-9 * scale) stable.push_back(i);
            }
            if (static_cast<Eigen::Index>(stable.size()) == m) {
                Eigen::MatrixXcd v1(m, m), v2(m, m);
                for (Eigen::Index k = 0; k < m; ++k) {
                    v1.col(k) = es.eigenvectors().col(stable[k]).head(m);
                    v2.col(k) = es.eigenvectors().col(stable[k]).tail(m);
                }
                Eigen::MatrixXcd x = v2 * v1.inverse();
                // the stable subspace is the graph mu = -Mw lambda
                mw = symmetrize(-x.real());
                have_subspace = true;
            }
        }
    }

    if (have_subspace) {
        // Newton polish: DF[E] = A E + E A^T with A = Mw + Jw
        for (int it = 0; it < 5; ++it) {
            MatrixXd resid = mw * mw + jw * mw - mw * jw - dw;
            if (resid.norm() <= 1e-13 * scale) break;
            MatrixXd delta = solve_sylvester_small(mw + jw, -resid);
            mw = symmetrize(mw + delta);
        }
        auto proj = project_psd(mw);
        if (proj.min_eigenvalue >= -1e-9 * scale) {
            out.m = symmetrize(cs.sqrt * proj.projected * cs.sqrt);
            out.residual_norm = riccati_residual(out.c, out.jrev, out.d, out.m);
            if (out.residual_norm <= 1e-10 * (1.0 + out.d.norm())) return out;
        }
    }

    // Fallback: relax the Riccati ODE to stationarity.
    const double t_slow = characteristic_time(out.c, out.d);
    if (!std::isfinite(t_slow)) {  // D = 0
        out.m = MatrixXd::Zero(m, m);
        out.residual_norm = riccati_residual(out.c, out.jrev, out.d, out.m);
        return out;
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(out.d, out.c,
                                                           Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    const double t_fast = 1.0 / std::sqrt(std::max(ges.eigenvalues().maxCoeff(), 1e-12));
    const double dt = t_fast / 64.0;
    const double horizon = std::min(1000.0 * t_slow, 2e7 * dt);
    RiccatiTrajectory traj = solve_riccati_ode(out.c, out.jrev, out.d, horizon, dt, 1 << 20);
    out.m = traj.final();
    out.limit_converged = true;
    out.residual_norm = riccati_residual(out.c, out.jrev, out.d, out.m);
    const Eigen::LLT<MatrixXd> c_llt(out.c);
    detail::RiccatiRhs rhs{out.d, out.jrev, c_llt};
    if (rhs(out.m).norm() > 1e-8 * (1.0 + out.d.norm())) {
        throw SolverError("solve_are: no stabilizing solution found and the Riccati ODE did "
                          "not converge by t = " + std::to_string(horizon));
    }
    return out;
}

// Eigenvectors of D relative to C: V* C V = I and V* D V = diag(gamma).
// Applies only when the reversible matrix vanishes (even-parity variables).
struct Diagonalization {
    MatrixXd v;
    VectorXd gamma;
};

inline Diagonalization diagonalize(const MatrixXd& c, const MatrixXd& d,
                                   const MatrixXd* jrev = nullptr, double jrev_tol = 0.0) {
    if (jrev && jrev->norm() > jrev_tol) {
        throw SolverError("diagonalize: reversible matrix J is nonzero (|J| = " +
                          std::to_string(jrev->norm()) +
                          "); relative diagonalization requires even-parity variables");
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(
        symmetrize(d), symmetrize(c), Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (ges.info() != Eigen::Success) {
        throw SolverError("diagonalize: generalized eigensolve failed");
    }
    Diagonalization out{ges.eigenvectors(), ges.eigenvalues().cwiseMax(0.0)};
    const double id_err = (out.v.transpose() * c * out.v -
                           MatrixXd::Identity(c.rows(), c.cols())).norm();
    const double diag_err =
        (out.v.transpose() * d * out.v - MatrixXd(out.gamma.asDiagonal())).norm();
    if (id_err > 1e-12 * (1.0 + c.norm()) || diag_err > 1e-10 * (1.0 + d.norm())) {
        throw SolverError("diagonalize: reconstruction check failed (C error " +
                          std::to_string(id_err) + ", D error " + std::to_string(diag_err) + ")");
    }
    return out;
}

// Closed forms for m = 1: M(t) = sqrt(CD) tanh(sqrt(D/C) t) and the decay
// envelope a(t)/a0 = sech(sqrt(D/C) t). These anchor the matrix solvers.
inline double scalar_value_hessian(double c, double d, double t) {
    if (c <= 0 || d < 0 || t < 0) {
        throw std::invalid_argument("scalar_value_hessian: need C > 0, D >= 0, t >= 0");
    }
    if (d == 0.0) return 0.0;
    return std::sqrt(c * d) * std::tanh(std::sqrt(d / c) * t);
}

inline double scalar_decay_envelope(double c, double d, double t) {
    if (c <= 0 || d < 0 || t < 0) {
        throw std::invalid_argument("scalar_decay_envelope: need C > 0, D >= 0, t >= 0");
    }
    if (d == 0.0) return 1.0;
    const double x = std::sqrt(d / c) * t;
    const double e = std::exp(-x);
    return 2.0 * e / (1.0 + e * e);  // sech without overflow
}

}  // namespace bestfit
