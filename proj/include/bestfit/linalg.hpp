// Small dense linear-algebra helpers used across the toolkit.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "bestfit/errors.hpp"

namespace bestfit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrize(const MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

inline MatrixXd antisymmetrize(const MatrixXd& m) {
    return 0.5 * (m - m.transpose());
}

// Largest deviation from (anti)symmetry, useful as a diagnostic before the
// exact projection is applied.
inline double asymmetry_norm(const MatrixXd& m) {
    return 0.5 * (m - m.transpose()).norm();
}

inline double symmetry_defect(const MatrixXd& m) {
    return 0.5 * (m + m.transpose()).norm();
}

inline bool all_finite(const VectorXd& v) {
    return v.allFinite();
}

inline double min_eigenvalue_sym(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Clip eigenvalues of a symmetric matrix from below. Eigenvalues below
// `hard_floor` are treated as genuine negativity and reported via the
// returned minimum; callers decide whether that is an error.
struct PsdProjection {
    MatrixXd projected;
    double min_eigenvalue;
};

inline PsdProjection project_psd(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
    VectorXd ev = es.eigenvalues();
    const double min_ev = ev.minCoeff();
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 0.0);
    return {es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose(), min_ev};
}

// Symmetric positive-definite square root and inverse square root.
struct SpdSqrt {
    MatrixXd sqrt;
    MatrixXd inv_sqrt;
};

inline SpdSqrt spd_sqrt(const MatrixXd& m, const std::string& what = "matrix") {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
    const VectorXd& ev = es.eigenvalues();
    if (ev.minCoeff() <= 0.0) {
        throw SolverError(what + " is not positive-definite (min eigenvalue " +
                          std::to_string(ev.minCoeff()) + ")");
    }
    VectorXd r = ev.cwiseSqrt();
    VectorXd ri = r.cwiseInverse();
    const MatrixXd& v = es.eigenvectors();
    return {v * r.asDiagonal() * v.transpose(), v * ri.asDiagonal() * v.transpose()};
}

// Solve A X + X A^T = B by Kronecker linearization; fine at the m <= 32
// scale this toolkit targets.
inline MatrixXd solve_sylvester_small(const MatrixXd& a, const MatrixXd& b) {
    const Eigen::Index m = a.rows();
    const MatrixXd id = MatrixXd::Identity(m, m);
    // vec(A X) = (I (x) A) vec X, vec(X A^T) = (A (x) I) vec X  (column-major)
    MatrixXd k = MatrixXd::Zero(m * m, m * m);
    for (Eigen::Index j = 0; j < m; ++j) k.block(j * m, j * m, m, m) = a;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            k.block(i * m, j * m, m, m) += a(i, j) * id;
    Eigen::Map<const VectorXd> rhs(b.data(), m * m);
    VectorXd x = k.partialPivLu().solve(rhs);
    return Eigen::Map<const MatrixXd>(x.data(), m, m);
}

}  // namespace bestfit
