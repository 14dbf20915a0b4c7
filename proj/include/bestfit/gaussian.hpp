// Closed forms for quadratic Hamiltonians with linear observables:
// H = p*p/2 + q*K q/2, A = G z + offset. Tilted densities
// exp(-beta H + lambda*A) stay Gaussian, so sampling, moments, the
// log-partition function and the entropy are all available exactly.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "bestfit/errors.hpp"
#include "bestfit/phase_system.hpp"
#include "bestfit/rng.hpp"

namespace bestfit {

class GaussianModel {
public:
    GaussianModel(const GaussianInfo& info, double beta) : info_(info), beta_(beta) {
        if (beta <= 0) throw ConfigError("GaussianModel: beta must be positive");
        n_ = static_cast<int>(info.stiffness.rows());
        m_ = static_cast<int>(info.obs_rows.rows());
        llt_.compute(info.stiffness);
        if (llt_.info() != Eigen::Success) {
            throw SolverError("GaussianModel: stiffness matrix is not positive-definite");
        }
        gq_ = info.obs_rows.leftCols(n_);
        gp_ = info.obs_rows.rightCols(n_);
        // G S^{-1} G* with S = diag(K, I)
        gsg_ = gq_ * llt_.solve(gq_.transpose()) + gp_ * gp_.transpose();
        // Omega = G J_sym G*
        omega_ = gq_ * gp_.transpose() - gp_ * gq_.transpose();
        log_det_k_ = 0.0;
        for (int i = 0; i < n_; ++i) log_det_k_ += 2.0 * std::log(llt_.matrixLLT()(i, i));
    }

    int n() const { return n_; }
    int num_observables() const { return m_; }
    double beta() const { return beta_; }

    // Fisher matrix C = cov(A) = (1/beta) G S^{-1} G*; independent of lambda.
    MatrixXd fisher() const { return gsg_ / beta_; }

    MatrixXd poisson_matrix() const { return omega_; }

    // f(lambda) = <LA> = beta^{-1} Omega lambda
    VectorXd drift(const VectorXd& lambda) const { return omega_ * lambda / beta_; }

    // Mean of z under the tilt: (beta S)^{-1} G* lambda.
    VectorXd mean_state(const VectorXd& lambda) const {
        VectorXd m(2 * n_);
        m.head(n_) = llt_.solve(gq_.transpose() * lambda) / beta_;
        m.tail(n_) = gp_.transpose() * lambda / beta_;
        return m;
    }

    VectorXd macrostate(const VectorXd& lambda) const {
        return fisher() * lambda + info_.obs_offset;
    }

    // <H> = n/beta + lambda* G S^{-1} G* lambda / (2 beta^2)
    double mean_energy(const VectorXd& lambda) const {
        return n_ / beta_ + lambda.dot(gsg_ * lambda) / (2.0 * beta_ * beta_);
    }

    double log_partition(const VectorXd& lambda) const {
        return n_ * std::log(2.0 * M_PI) - n_ * std::log(beta_) - 0.5 * log_det_k_ +
               lambda.dot(gsg_ * lambda) / (2.0 * beta_) + lambda.dot(info_.obs_offset);
    }

    // Absolute Gibbs entropy s = beta u - lambda*a + psi. Constant across the
    // fixed-beta family (the tilt moves the mean, not the covariance).
    double entropy(const VectorXd& lambda) const {
        return beta_ * mean_energy(lambda) - lambda.dot(macrostate(lambda)) +
               log_partition(lambda);
    }

    // Fixed-temperature entropy relative to equilibrium,
    // s~(a) = phi(lambda) - lambda*a = -(1/2) lambda* C lambda, the potential
    // whose a-gradient is -lambda.
    double relative_entropy(const VectorXd& lambda) const {
        return -0.5 * lambda.dot(gsg_ * lambda) / beta_;
    }

    // Closure matrix D(lambda) for a diagonal weight acting on the residual
    // components of LA after projection onto the score span:
    //   D = W [ cov(QLA) + f f* ] W.
    MatrixXd closure_matrix(const VectorXd& lambda, const VectorXd& weights) const {
        // LA = G' z with G'_q = -G_p K, G'_p = G_q
        MatrixXd gpr_q = -gp_ * info_.stiffness;
        const MatrixXd& gpr_p = gq_;
        // cov(LA, A) = (1/beta) G' S^{-1} G*
        MatrixXd cov_la_a = (gpr_q * llt_.solve(gq_.transpose()) + gpr_p * gp_.transpose()) / beta_;
        MatrixXd cov_la = (gpr_q * llt_.solve(gpr_q.transpose()) + gpr_p * gpr_p.transpose()) / beta_;
        MatrixXd c = fisher();
        MatrixXd k = c.llt().solve(cov_la_a.transpose()).transpose();  // cov(LA,A) C^{-1}
        MatrixXd resid_cov = cov_la - k * cov_la_a.transpose();
        VectorXd f = drift(lambda);
        MatrixXd d = resid_cov + f * f.transpose();
        return weights.asDiagonal() * d * weights.asDiagonal();
    }

    // Exact draw from the tilted Gaussian; one point per column.
    MatrixXd sample(const VectorXd& lambda, int count, std::mt19937_64& rng) const {
        std::normal_distribution<double> gauss(0.0, 1.0);
        const VectorXd m = mean_state(lambda);
        const double root_beta = std::sqrt(beta_);
        MatrixXd pts(2 * n_, count);
        VectorXd xi(n_);
        for (int j = 0; j < count; ++j) {
            for (int i = 0; i < n_; ++i) xi[i] = gauss(rng);
            // q = m_q + (1/sqrt(beta)) L^{-T} xi, cov = (beta K)^{-1}
            pts.col(j).head(n_) =
                m.head(n_) + llt_.matrixU().solve(xi) / root_beta;
            for (int i = 0; i < n_; ++i) pts.col(j)[n_ + i] = m[n_ + i] + gauss(rng) / root_beta;
        }
        return pts;
    }

    // Solve <H>(beta) = E for fixed lambda; the mean energy is strictly
    // decreasing in beta, so bisection is safe.
    static double solve_beta(const GaussianInfo& info, const VectorXd& lambda, double energy) {
        double lo = 1e-6, hi = 1e6;
        auto u = [&](double b) { return GaussianModel(info, b).mean_energy(lambda); };
        if (u(lo) < energy || u(hi) > energy) {
            throw SolverError("solve_beta: energy not attainable within beta in [1e-6, 1e6]");
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = std::sqrt(lo * hi);  // bisect in log space
            if (u(mid) > energy)
                lo = mid;
            else
                hi = mid;
            if (hi / lo < 1.0 + 1e-14) break;
        }
        return std::sqrt(lo * hi);
    }

private:
    GaussianInfo info_;
    double beta_;
    int n_ = 0, m_ = 0;
    Eigen::LLT<MatrixXd> llt_;
    MatrixXd gq_, gp_, gsg_, omega_;
    double log_det_k_ = 0.0;
};

}  // namespace bestfit
