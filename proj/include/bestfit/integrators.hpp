// Symplectic integration of the microscopic flow dz/dt = J_sym grad H.
// Stoermer-Verlet for separable Hamiltonians, implicit midpoint otherwise.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "bestfit/errors.hpp"
#include "bestfit/phase_system.hpp"

namespace bestfit {

struct MicroTrajectory {
    std::vector<double> times;
    std::vector<VectorXd> states;
    double energy_drift = 0.0;  // max_k |H(z_k) - H(z_0)|
};

namespace detail {

inline void check_blowup(const VectorXd& z, double t) {
    if (!z.allFinite()) {
        throw SolverError("integrate_micro: non-finite state at t = " + std::to_string(t));
    }
}

}  // namespace detail

// One kick-drift-kick Verlet step; dt may be negative (time reversal).
// For separable H the q-gradient of H is independent of p.
inline void verlet_step(const PhaseSystem& sys, VectorXd& z, double dt) {
    const int n = sys.n;
    VectorXd g = sys.grad_h(z);
    z.tail(n) -= 0.5 * dt * g.head(n);
    z.head(n) += dt * z.tail(n);
    g = sys.grad_h(z);
    z.tail(n) -= 0.5 * dt * g.head(n);
}

// Implicit midpoint z' = z + dt J grad H((z + z')/2), fixed-point iteration.
inline void implicit_midpoint_step(const PhaseSystem& sys, VectorXd& z, double dt,
                                   double tol = 1e-12, int max_iter = 50) {
    const int n = sys.n;
    VectorXd znew = z;
    for (int it = 0; it < max_iter; ++it) {
        const VectorXd mid = 0.5 * (z + znew);
        const VectorXd g = sys.grad_h(mid);
        VectorXd next(2 * n);
        next.head(n) = z.head(n) + dt * g.tail(n);
        next.tail(n) = z.tail(n) - dt * g.head(n);
        const double delta = (next - znew).lpNorm<Eigen::Infinity>();
        znew.swap(next);
        if (delta < tol) break;
        if (it == max_iter - 1) {
            throw SolverError("implicit midpoint: fixed point not reached in " +
                              std::to_string(max_iter) + " iterations");
        }
    }
    z = znew;
}

inline void micro_step(const PhaseSystem& sys, VectorXd& z, double dt) {
    if (sys.separable)
        verlet_step(sys, z, dt);
    else
        implicit_midpoint_step(sys, z, dt);
}

// Integrate and store the trajectory on the uniform grid t_k = k dt.
inline MicroTrajectory integrate_micro(const PhaseSystem& sys, const VectorXd& z0, double dt,
                                       double horizon) {
    if (!(std::abs(dt) > 0) || std::abs(horizon) < std::abs(dt)) {
        throw std::invalid_argument("integrate_micro: need |dt| > 0 and |T| >= |dt|");
    }
    const auto steps = static_cast<std::size_t>(std::floor(std::abs(horizon / dt) + 1e-12));
    const double remainder = horizon - static_cast<double>(steps) * dt;
    MicroTrajectory traj;
    traj.times.reserve(steps + 2);
    traj.states.reserve(steps + 2);
    VectorXd z = z0;
    const double h0 = sys.hamiltonian(z0);
    traj.times.push_back(0.0);
    traj.states.push_back(z);
    for (std::size_t k = 1; k <= steps; ++k) {
        micro_step(sys, z, dt);
        detail::check_blowup(z, k * dt);
        traj.times.push_back(k * dt);
        traj.states.push_back(z);
        traj.energy_drift = std::max(traj.energy_drift, std::abs(sys.hamiltonian(z) - h0));
    }
    if (std::abs(remainder) > 1e-12 * std::abs(dt)) {
        // land exactly on the horizon with one short step
        micro_step(sys, z, remainder);
        detail::check_blowup(z, horizon);
        traj.times.push_back(horizon);
        traj.states.push_back(z);
        traj.energy_drift = std::max(traj.energy_drift, std::abs(sys.hamiltonian(z) - h0));
    }
    return traj;
}

}  // namespace bestfit
