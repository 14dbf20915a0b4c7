// Closed reduced dynamics. Four regimes:
//   adiabatic            C(l) dl/dt = f(l)                  (reversible)
//   linear stationary    C dl/dt = (J - M) l                (M from the ARE)
//   linear nonstationary C dl/dt = (J - M(t)) l             (M(t) from the Riccati ODE)
//   nonlinear stationary C(l) dl/dt = f(l) + mu(l),         mu from extremal-path
//                                                           boundary-value solves
// plus the entropy / entropy-production / flux bookkeeping shared by all.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bestfit/errors.hpp"
#include "bestfit/gaussian.hpp"
#include "bestfit/linalg.hpp"
#include "bestfit/moments.hpp"
#include "bestfit/riccati.hpp"
#include "bestfit/stat_model.hpp"

namespace bestfit {

enum class Regime { Adiabatic, LinearStationary, LinearNonstationary, NonlinearStationary };

inline std::string regime_name(Regime r) {
    switch (r) {
        case Regime::Adiabatic: return "adiabatic";
        case Regime::LinearStationary: return "linear-stationary";
        case Regime::LinearNonstationary: return "linear-nonstationary";
        case Regime::NonlinearStationary: return "nonlinear-stationary";
    }
    return "?";
}

struct ReducedTrajectory {
    Regime regime = Regime::Adiabatic;
    std::vector<double> times;
    std::vector<VectorXd> lambda_path;
    std::vector<VectorXd> a_path;
    std::vector<VectorXd> flux_path;     // conjugate flux mu(t)
    std::vector<VectorXd> a_rate_path;   // da/dt at the nodes (integrator RHS)
    std::vector<double> entropy_path;    // s(t) relative to equilibrium
    std::vector<double> production_path;  // ds/dt
    double t_char = 0.0;
    bool convexity_warning = false;

    int size() const { return static_cast<int>(times.size()); }
};

// ------------------------------ cost functions ------------------------------

struct LagrangianEval {
    double kinetic = 0.0;
    double potential = 0.0;
    double total = 0.0;
};

// L(l, ldot) = (1/2)(ldot - C^{-1}f)* C (ldot - C^{-1}f) + (1/2) l*D l
inline LagrangianEval lagrangian(const MatrixXd& c, const VectorXd& f, const MatrixXd& d,
                                 const VectorXd& lambda, const VectorXd& lambda_dot) {
    VectorXd v = lambda_dot - c.llt().solve(f);
    LagrangianEval out;
    out.kinetic = 0.5 * v.dot(c * v);
    out.potential = 0.5 * lambda.dot(d * lambda);
    out.total = out.kinetic + out.potential;
    return out;
}

// H(l, mu) = (1/2) mu* C^{-1} mu + f* C^{-1} mu - (1/2) l*D l, the convex
// conjugate of the Lagrangian in its velocity argument.
inline double hamiltonian_dual(const MatrixXd& c, const VectorXd& f, const MatrixXd& d,
                               const VectorXd& lambda, const VectorXd& mu) {
    VectorXd ci_mu = c.llt().solve(mu);
    return 0.5 * mu.dot(ci_mu) + f.dot(ci_mu) - 0.5 * lambda.dot(d * lambda);
}

inline LagrangianEval lagrangian(const ModelMatrices& mats, const VectorXd& lambda,
                                 const VectorXd& lambda_dot) {
    return lagrangian(mats.c, mats.f, mats.d, lambda, lambda_dot);
}

inline double hamiltonian_dual(const ModelMatrices& mats, const VectorXd& lambda,
                               const VectorXd& mu) {
    return hamiltonian_dual(mats.c, mats.f, mats.d, lambda, mu);
}

// ----------------------------- coefficient sources ---------------------------

struct CoeffSet {
    MatrixXd c;
    VectorXd f;
    MatrixXd omega;
    MatrixXd d;
    VectorXd a;
};

class CoeffProvider {
public:
    virtual ~CoeffProvider() = default;
    virtual int size() const = 0;
    virtual CoeffSet at(const VectorXd& lambda) const = 0;

    // smallest useful finite-difference step; providers that quantize lambda
    // internally must raise it above their grid spacing
    virtual double gradient_step_floor() const { return 1e-6; }

    // dH/dl at fixed mu; central differences over the scalar by default.
    virtual VectorXd hamiltonian_grad_lambda(const VectorXd& lambda, const VectorXd& mu) const {
        VectorXd g(lambda.size());
        VectorXd lp = lambda, lm = lambda;
        for (Eigen::Index i = 0; i < lambda.size(); ++i) {
            const double h = gradient_step_floor() * (1.0 + std::abs(lambda[i]));
            lp[i] += h;
            lm[i] -= h;
            const CoeffSet sp = at(lp), sm = at(lm);
            g[i] = (hamiltonian_dual(sp.c, sp.f, sp.d, lp, mu) -
                    hamiltonian_dual(sm.c, sm.f, sm.d, lm, mu)) /
                   (2.0 * h);
            lp[i] = lambda[i];
            lm[i] = lambda[i];
        }
        return g;
    }
};

// Fixed equilibrium matrices: f(l) = J l, a(l) = C l. Exact gradients.
class ConstantCoeffProvider : public CoeffProvider {
public:
    ConstantCoeffProvider(MatrixXd c, MatrixXd jrev, MatrixXd d)
        : c_(std::move(c)), j_(std::move(jrev)), d_(std::move(d)), llt_(c_) {
        if (llt_.info() != Eigen::Success) {
            throw SolverError("ConstantCoeffProvider: C must be positive-definite");
        }
    }

    int size() const override { return static_cast<int>(c_.rows()); }

    CoeffSet at(const VectorXd& lambda) const override {
        // beta is absorbed into J for the constant linearization
        return {c_, j_ * lambda, j_, d_, c_ * lambda};
    }

    VectorXd hamiltonian_grad_lambda(const VectorXd& lambda, const VectorXd& mu) const override {
        // H = (1/2) mu*C^{-1}mu + l*J*C^{-1}mu - (1/2) l*D l with J* = -J
        return -j_ * llt_.solve(mu) - d_ * lambda;
    }

private:
    MatrixXd c_, j_, d_;
    Eigen::LLT<MatrixXd> llt_;
};

// Closed-form coefficients for quadratic Hamiltonians with linear observables
// at fixed temperature.
class GaussianCoeffProvider : public CoeffProvider {
public:
    GaussianCoeffProvider(const GaussianInfo& info, double beta, VectorXd weights)
        : model_(info, beta), weights_(std::move(weights)) {}

    int size() const override { return model_.num_observables(); }

    CoeffSet at(const VectorXd& lambda) const override {
        return {model_.fisher(), model_.drift(lambda), model_.poisson_matrix(),
                model_.closure_matrix(lambda, weights_), model_.macrostate(lambda)};
    }

private:
    GaussianModel model_;
    VectorXd weights_;
};

// Monte Carlo coefficients for general systems, cached on a quantized
// lambda grid so repeated closure evaluations do not re-sample.
class McCoeffProvider : public CoeffProvider {
public:
    McCoeffProvider(StatModel model, WeightSpec weights, int sample_count, std::uint64_t seed,
                    double quantum = 1e-3)
        : model_(std::move(model)), weights_(std::move(weights)), count_(sample_count),
          seed_(seed), quantum_(quantum) {}

    int size() const override { return model_.system.num_observables(); }

    double gradient_step_floor() const override { return 2.0 * quantum_; }

    CoeffSet at(const VectorXd& lambda) const override {
        std::vector<long long> key(lambda.size());
        for (Eigen::Index i = 0; i < lambda.size(); ++i) {
            key[static_cast<std::size_t>(i)] = std::llround(lambda[i] / quantum_);
        }
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        VectorXd snapped(lambda.size());
        std::uint64_t mix = seed_;
        for (std::size_t i = 0; i < key.size(); ++i) {
            snapped[static_cast<Eigen::Index>(i)] = key[i] * quantum_;
            mix = mix * 0x100000001b3ULL + static_cast<std::uint64_t>(key[i] + 0x7fffffff);
        }
        StatModel local = model_;
        local.lambda = snapped;
        if (local.variant == ModelVariant::FixedEnergy) {
            local.beta_of_lambda = solve_beta(local, mix);
        }
        EnsembleSample s = sample(local, count_, mix);
        ModelMatrices mm = estimate_matrices(local, s, weights_);
        CoeffSet cs{mm.c, mm.f, mm.omega, mm.d,
                    observable_values(local.system, s.points).rowwise().mean()};
        if (cache_.size() < 20000) cache_.emplace(std::move(key), cs);
        return cs;
    }

private:
    StatModel model_;
    WeightSpec weights_;
    int count_;
    std::uint64_t seed_;
    double quantum_;
    mutable std::map<std::vector<long long>, CoeffSet> cache_;
};

// ------------------------------ entropy anchors ------------------------------

// Relative entropy of the state lambda0 against equilibrium by thermodynamic
// integration of ds = -lambda* da along the straight parameter path. For
// constant C this is exactly -(1/2) lambda0* C lambda0.
inline double entropy_anchor(const CoeffProvider& provider, const VectorXd& lambda0,
                             int nodes = 33) {
    if (lambda0.norm() == 0.0) return 0.0;
    double s = 0.0;
    double prev = 0.0;
    for (int i = 0; i <= nodes; ++i) {
        const double tau = static_cast<double>(i) / nodes;
        const VectorXd l = tau * lambda0;
        const double integrand = -l.dot(provider.at(l).c * lambda0);
        if (i > 0) s += 0.5 * (prev + integrand) / nodes;
        prev = integrand;
    }
    return s;
}

// ---------------------------------- adiabatic --------------------------------

inline ReducedTrajectory integrate_adiabatic(const CoeffProvider& provider,
                                             const VectorXd& lambda0, double horizon, double dt) {
    if (horizon <= 0 || dt <= 0) {
        throw std::invalid_argument("integrate_adiabatic: need horizon > 0 and dt > 0");
    }
    auto rhs = [&provider](const VectorXd& l) {
        CoeffSet cs = provider.at(l);
        Eigen::LLT<MatrixXd> llt(cs.c);
        if (llt.info() != Eigen::Success) {
            throw SolverError("integrate_adiabatic: C(lambda) lost positive-definiteness at "
                              "|lambda| = " + std::to_string(l.norm()));
        }
        return VectorXd(llt.solve(cs.f));
    };
    const auto steps = static_cast<long long>(std::llround(horizon / dt));
    ReducedTrajectory traj;
    traj.regime = Regime::Adiabatic;
    VectorXd l = lambda0;
    double s = entropy_anchor(provider, lambda0);
    VectorXd k1, k2, k3, k4;
    for (long long step = 0; step <= steps; ++step) {
        CoeffSet cs = provider.at(l);
        traj.times.push_back(step * dt);
        traj.lambda_path.push_back(l);
        traj.a_path.push_back(cs.a);
        traj.flux_path.push_back(VectorXd::Zero(l.size()));
        traj.a_rate_path.push_back(cs.f);
        traj.entropy_path.push_back(s);
        traj.production_path.push_back(0.0);
        if (step == steps) break;
        const double ds0 = -l.dot(cs.f);
        k1 = rhs(l);
        k2 = rhs(l + 0.5 * dt * k1);
        k3 = rhs(l + 0.5 * dt * k2);
        k4 = rhs(l + dt * k3);
        l += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // entropy quadrature; the integrand -lambda*f vanishes identically,
        // so this records pure numerical drift
        s += 0.5 * dt * (ds0 - l.dot(provider.at(l).f));
    }
    return traj;
}

// ------------------------------- linear closures -----------------------------

namespace detail {

struct HessianSource {
    const MatrixXd* fixed = nullptr;
    const RiccatiTrajectory* traj = nullptr;

    MatrixXd at(double t) const { return fixed ? *fixed : traj->eval(t); }
};

inline ReducedTrajectory integrate_linear_impl(const MatrixXd& c, const MatrixXd& jrev,
                                               const HessianSource& source, Regime regime,
                                               const VectorXd& lambda0, double horizon,
                                               double dt) {
    if (horizon <= 0 || dt <= 0) {
        throw std::invalid_argument("integrate_linear: need horizon > 0 and dt > 0");
    }
    if (source.traj && source.traj->horizon() < horizon - 1e-9) {
        throw ValidationError("integrate_linear: M(t) grid ends at " +
                              std::to_string(source.traj->horizon()) +
                              " but the run horizon is " + std::to_string(horizon));
    }
    Eigen::LLT<MatrixXd> llt(symmetrize(c));
    if (llt.info() != Eigen::Success) {
        throw SolverError("integrate_linear: C is not positive-definite");
    }
    auto rhs = [&](const VectorXd& l, double t) {
        return VectorXd(llt.solve((jrev - source.at(t)) * l));
    };
    const auto steps = static_cast<long long>(std::llround(horizon / dt));
    ReducedTrajectory traj;
    traj.regime = regime;
    VectorXd l = lambda0;
    VectorXd k1, k2, k3, k4;
    for (long long step = 0; step <= steps; ++step) {
        const double t = step * dt;
        const MatrixXd mt = source.at(t);
        const VectorXd a = c * l;
        traj.times.push_back(t);
        traj.lambda_path.push_back(l);
        traj.a_path.push_back(a);
        traj.flux_path.push_back(-mt * l);
        traj.a_rate_path.push_back((jrev - mt) * l);
        traj.entropy_path.push_back(-0.5 * l.dot(a));
        traj.production_path.push_back(l.dot(mt * l));
        if (step == steps) break;
        k1 = rhs(l, t);
        k2 = rhs(l + 0.5 * dt * k1, t + 0.5 * dt);
        k3 = rhs(l + 0.5 * dt * k2, t + 0.5 * dt);
        k4 = rhs(l + dt * k3, t + dt);
        l += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return traj;
}

}  // namespace detail

// Stationary linear closure: flux mu = -M lambda with the ARE solution M.
inline ReducedTrajectory integrate_linear(const EquilibriumConstants& eqc,
                                          const ValueHessian& stationary,
                                          const VectorXd& lambda0, double horizon, double dt) {
    detail::HessianSource src{&stationary.m, nullptr};
    ReducedTrajectory traj = detail::integrate_linear_impl(
        eqc.c0, eqc.jrev, src, Regime::LinearStationary, lambda0, horizon, dt);
    traj.t_char = characteristic_time(eqc.c0, eqc.d0);
    return traj;
}

// Nonstationary linear closure: flux mu = -M(t) lambda with M(t) sampled from
// the Riccati ODE; cubic-Hermite interpolation between nodes, no
// extrapolation beyond the stored grid.
inline ReducedTrajectory integrate_linear(const EquilibriumConstants& eqc,
                                          const RiccatiTrajectory& hessian_traj,
                                          const VectorXd& lambda0, double horizon, double dt) {
    detail::HessianSource src{nullptr, &hessian_traj};
    ReducedTrajectory traj = detail::integrate_linear_impl(
        eqc.c0, eqc.jrev, src, Regime::LinearNonstationary, lambda0, horizon, dt);
    traj.t_char = characteristic_time(eqc.c0, eqc.d0);
    return traj;
}

// -------------------------- nonlinear stationary closure ---------------------

struct BvpConfig {
    double horizon_factor = 20.0;  // T_bvp = factor * t_char
    double step_factor = 0.01;     // dt_bvp = factor * t_char
    int max_newton = 50;
    double residual_tol = 1e-9;
    double terminal_tol = 1e-6;  // |lambda(T_bvp)| per unit starting norm
};

namespace detail {

// Canonical extremal flow of the dual pair: dl/dt = dH/dmu, dmu/dt = -dH/dl.
class ExtremalShooter {
public:
    ExtremalShooter(const CoeffProvider& provider, const MatrixXd& m0, double t_bvp, double dt,
                    const BvpConfig& cfg)
        : provider_(provider), m0_(m0), t_bvp_(t_bvp), dt_(dt), cfg_(cfg) {}

    struct Shot {
        VectorXd lambda_end;
        VectorXd residual;  // mu(T) + M0 lambda(T): zero on the stable subspace
    };

    Shot integrate(const VectorXd& lambda_start, const VectorXd& mu0) const {
        const int m = static_cast<int>(lambda_start.size());
        VectorXd y(2 * m);
        y.head(m) = lambda_start;
        y.tail(m) = mu0;
        const auto steps = static_cast<long long>(std::llround(t_bvp_ / dt_));
        VectorXd k1, k2, k3, k4;
        for (long long s = 0; s < steps; ++s) {
            k1 = flow(y);
            k2 = flow(y + 0.5 * dt_ * k1);
            k3 = flow(y + 0.5 * dt_ * k2);
            k4 = flow(y + dt_ * k3);
            y += (dt_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!y.allFinite() || y.norm() > 1e12) {
                throw SolverError("extremal shooting: flow diverged at t = " +
                                  std::to_string(s * dt_));
            }
        }
        Shot shot;
        shot.lambda_end = y.head(m);
        shot.residual = y.tail(m) + m0_ * y.head(m);
        return shot;
    }

    // One RK4 step of the extremal flow for the pair (lambda, mu); the
    // reduced trajectory is the lambda-component of the extremal path, so
    // advancing the pair advances the closure.
    void advance_pair(VectorXd& lambda, VectorXd& mu, double dt) const {
        const int m = static_cast<int>(lambda.size());
        VectorXd y(2 * m);
        y.head(m) = lambda;
        y.tail(m) = mu;
        VectorXd k1 = flow(y);
        VectorXd k2 = flow(y + 0.5 * dt * k1);
        VectorXd k3 = flow(y + 0.5 * dt * k2);
        VectorXd k4 = flow(y + dt * k3);
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        lambda = y.head(m);
        mu = y.tail(m);
    }

    void set_warm_start(const VectorXd& mu) {
        warm_start_ = mu;
        warm_ = true;
    }

    // Newton on mu0 with the previous solution as warm start.
    VectorXd solve_flux(const VectorXd& lambda_start, bool* convexity_warning) {
        const int m = static_cast<int>(lambda_start.size());
        if (lambda_start.norm() < 1e-12) return VectorXd::Zero(m);
        VectorXd mu0 = warm_ && warm_start_.size() == m ? warm_start_
                                                        : VectorXd(-m0_ * lambda_start);
        Shot shot = integrate(lambda_start, mu0);
        const double lam_scale = 1.0 + lambda_start.norm();
        int bad_direction_count = 0;
        for (int it = 0; it < cfg_.max_newton; ++it) {
            if (shot.residual.norm() <= cfg_.residual_tol * lam_scale &&
                shot.lambda_end.norm() <= cfg_.terminal_tol * lam_scale) {
                warm_start_ = mu0;
                warm_ = true;
                return mu0;
            }
            if (!jacobian_valid_ || it >= 2) refresh_jacobian(lambda_start, mu0, shot);
            VectorXd delta = jacobian_.partialPivLu().solve(-shot.residual);
            // damped update
            double alpha = 1.0;
            bool improved = false;
            for (int half = 0; half < 8; ++half) {
                Shot trial = integrate(lambda_start, mu0 + alpha * delta);
                if (trial.residual.norm() < shot.residual.norm()) {
                    mu0 += alpha * delta;
                    shot = trial;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!improved) {
                refresh_jacobian(lambda_start, mu0, shot);
                VectorXd retry = jacobian_.partialPivLu().solve(-shot.residual);
                Shot trial = integrate(lambda_start, mu0 + retry);
                if (trial.residual.norm() < shot.residual.norm()) {
                    mu0 += retry;
                    shot = trial;
                } else if (++bad_direction_count >= 3 && convexity_warning) {
                    *convexity_warning = true;
                }
            }
        }
        throw SolverError("extremal shooting: Newton did not converge in " +
                          std::to_string(cfg_.max_newton) + " iterations (last residual " +
                          std::to_string(shot.residual.norm()) + ")");
    }

private:
    VectorXd flow(const VectorXd& y) const {
        const int m = static_cast<int>(y.size()) / 2;
        const VectorXd lambda = y.head(m);
        const VectorXd mu = y.tail(m);
        CoeffSet cs = provider_.at(lambda);
        VectorXd out(2 * m);
        out.head(m) = cs.c.llt().solve(mu + cs.f);
        out.tail(m) = -provider_.hamiltonian_grad_lambda(lambda, mu);
        return out;
    }

    void refresh_jacobian(const VectorXd& lambda_start, const VectorXd& mu0, const Shot& base) {
        const int m = static_cast<int>(mu0.size());
        jacobian_.resize(m, m);
        for (int i = 0; i < m; ++i) {
            const double h = 1e-7 * (1.0 + std::abs(mu0[i]));
            VectorXd mu = mu0;
            mu[i] += h;
            Shot s = integrate(lambda_start, mu);
            jacobian_.col(i) = (s.residual - base.residual) / h;
        }
        jacobian_valid_ = true;
    }

    const CoeffProvider& provider_;
    MatrixXd m0_;
    double t_bvp_, dt_;
    BvpConfig cfg_;
    MatrixXd jacobian_;
    bool jacobian_valid_ = false;
    VectorXd warm_start_;
    bool warm_ = false;
};

}  // namespace detail

// Nonlinear stationary closure. At each requested state the instantaneous
// flux is mu(l) = mu(0) of the extremal path that starts at l and lands on
// the stable subspace of the linearized flow at equilibrium, found by single
// shooting with a damped Newton iteration and warm starts.
inline ReducedTrajectory integrate_nonlinear_stationary(const CoeffProvider& provider,
                                                        const VectorXd& lambda0, double horizon,
                                                        double dt, BvpConfig cfg = {}) {
    if (horizon <= 0 || dt <= 0) {
        throw std::invalid_argument("integrate_nonlinear_stationary: need horizon > 0, dt > 0");
    }
    const int m = provider.size();
    if (m > 4) {
        throw std::invalid_argument("integrate_nonlinear_stationary: extremal shooting is "
                                    "limited to m <= 4 resolved variables");
    }

    // equilibrium linearization -> stable-subspace terminal condition + scales
    const VectorXd zero = VectorXd::Zero(m);
    CoeffSet eq = provider.at(zero);
    MatrixXd j0(m, m);
    for (int i = 0; i < m; ++i) {
        const double h = 1e-5;
        VectorXd lp = zero, lm = zero;
        lp[i] += h;
        lm[i] -= h;
        j0.col(i) = (provider.at(lp).f - provider.at(lm).f) / (2.0 * h);
    }
    j0 = antisymmetrize(j0);
    ValueHessian vh = solve_are(eq.c, j0, eq.d);
    Eigen::EigenSolver<MatrixXd> es(MatrixXd(eq.c.llt().solve(j0 - vh.m)));
    double rate = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        rate = std::min(rate, std::abs(es.eigenvalues()[i].real()));
    }
    if (!(rate > 0) || !std::isfinite(rate)) {
        throw SolverError("integrate_nonlinear_stationary: equilibrium linearization is not "
                          "attracting; cannot anchor the shooting horizon");
    }
    const double t_char = 1.0 / rate;

    detail::ExtremalShooter shooter(provider, vh.m, cfg.horizon_factor * t_char,
                                    cfg.step_factor * t_char, cfg);
    ReducedTrajectory traj;
    traj.regime = Regime::NonlinearStationary;
    traj.t_char = t_char;

    const auto steps = static_cast<long long>(std::llround(horizon / dt));
    VectorXd l = lambda0;
    double s = entropy_anchor(provider, lambda0);
    double prev_integrand = 0.0;
    for (long long step = 0; step <= steps; ++step) {
        // fresh shoot at the node; the advanced conjugate state warm-starts it
        VectorXd mu = shooter.solve_flux(l, &traj.convexity_warning);
        CoeffSet cs = provider.at(l);
        const double integrand = -l.dot(cs.f + mu);
        if (step > 0) s += 0.5 * dt * (prev_integrand + integrand);
        prev_integrand = integrand;
        traj.times.push_back(step * dt);
        traj.lambda_path.push_back(l);
        traj.a_path.push_back(cs.a);
        traj.flux_path.push_back(mu);
        traj.a_rate_path.push_back(cs.f + mu);
        traj.entropy_path.push_back(s);
        traj.production_path.push_back(-l.dot(mu));
        if (step == steps) break;
        // the closure trajectory is the extremal path itself: advance the
        // canonical pair one RK4 step along the extremal flow
        shooter.advance_pair(l, mu, dt);
        shooter.set_warm_start(mu);
    }
    return traj;
}

// ------------------------------- thermodynamics ------------------------------

// Re-derives the entropy bookkeeping from the recorded paths: s by trapezoid
// quadrature of ds/dt = -lambda* (da/dt), anchored at -(1/2) a*C^{-1}a for
// near-equilibrium runs, and the irreversible production -lambda*mu.
inline ReducedTrajectory thermodynamics(ReducedTrajectory traj, const EquilibriumConstants& eqc,
                                        const ValueHessian* stationary = nullptr) {
    if (traj.flux_path.empty()) {
        throw std::invalid_argument("thermodynamics: flux path not populated");
    }
    const int n = traj.size();
    double s = -0.5 * traj.a_path[0].dot(eqc.c0.llt().solve(traj.a_path[0]));
    for (int k = 0; k < n; ++k) {
        traj.entropy_path[k] = s;
        traj.production_path[k] = -traj.lambda_path[k].dot(traj.flux_path[k]);
        if (k + 1 < n) {
            const double h = traj.times[k + 1] - traj.times[k];
            const double d0 = -traj.lambda_path[k].dot(traj.a_rate_path[k]);
            const double d1 = -traj.lambda_path[k + 1].dot(traj.a_rate_path[k + 1]);
            s += 0.5 * h * (d0 + d1);
        }
    }
    if (traj.regime == Regime::LinearStationary && stationary) {
        for (int k = 0; k < n; ++k) {
            const VectorXd& l = traj.lambda_path[k];
            const double two_v = l.dot(stationary->m * l);
            if (std::abs(traj.production_path[k] - two_v) > 1e-10 * (1.0 + std::abs(two_v))) {
                throw ValidationError("thermodynamics: ds/dt deviates from 2 v(lambda) at t = " +
                                      std::to_string(traj.times[k]));
            }
        }
    }
    return traj;
}

// ---------------------------- GENERIC decomposition --------------------------

struct GenericDecomposition {
    std::vector<VectorXd> reversible;    // f(lambda) = Omega dh/da form
    std::vector<VectorXd> irreversible;  // mu = -dv/dlambda
    double max_recomposition_error = 0.0;  // |reversible + irreversible - da/dt|
};

inline GenericDecomposition generic_decomposition(const ReducedTrajectory& traj,
                                                  const CoeffProvider& provider) {
    GenericDecomposition out;
    out.reversible.reserve(traj.size());
    out.irreversible.reserve(traj.size());
    for (int k = 0; k < traj.size(); ++k) {
        VectorXd f = provider.at(traj.lambda_path[k]).f;
        out.reversible.push_back(f);
        out.irreversible.push_back(traj.flux_path[k]);
        const double err = (f + traj.flux_path[k] - traj.a_rate_path[k]).norm();
        out.max_recomposition_error = std::max(out.max_recomposition_error, err);
    }
    return out;
}

}  // namespace bestfit
