#include <catch2/catch_amalgamated.hpp>

#include <bestfit/closure.hpp>
#include <bestfit/moments.hpp>
#include <bestfit/phase_system.hpp>
#include <bestfit/riccati.hpp>
#include <bestfit/rng.hpp>

#include "test_helpers.hpp"

#include <cmath>

using namespace bestfit;
using namespace bestfit::testing;

namespace {

// m = 1 provider with a state-dependent closure matrix D(l) = 1 + l^2;
// C = 1 and f = 0, so the stationary value gradient solves
// (1/2)(v')^2 = (1/2) l^2 D(l), i.e. v'(l) = l sqrt(1 + l^2).
class CubicPotentialProvider : public CoeffProvider {
public:
    int size() const override { return 1; }
    CoeffSet at(const VectorXd& lambda) const override {
        const double l = lambda[0];
        CoeffSet cs;
        cs.c = MatrixXd::Identity(1, 1);
        cs.f = VectorXd::Zero(1);
        cs.omega = MatrixXd::Zero(1, 1);
        cs.d = MatrixXd::Constant(1, 1, 1.0 + l * l);
        cs.a = lambda;
        return cs;
    }
};

EquilibriumConstants constants_from(const MatrixXd& c, const MatrixXd& j, const MatrixXd& d) {
    EquilibriumConstants eqc;
    eqc.c0 = c;
    eqc.jrev = j;
    eqc.d0 = d;
    const int m = static_cast<int>(c.rows());
    eqc.c0_se = MatrixXd::Zero(m, m);
    eqc.jrev_se = MatrixXd::Zero(m, m);
    eqc.d0_se = MatrixXd::Zero(m, m);
    return eqc;
}

}  // namespace

TEST_CASE("lack-of-fit cost function") {
    SECTION("frozen scalar example: C = D = 1, f = 0, l = 1, ldot = -1") {
        MatrixXd one = MatrixXd::Identity(1, 1);
        VectorXd f = VectorXd::Zero(1), l = VectorXd::Constant(1, 1.0),
                 ld = VectorXd::Constant(1, -1.0);
        LagrangianEval ev = lagrangian(one, f, one, l, ld);
        CHECK(ev.kinetic == Catch::Approx(0.5));
        CHECK(ev.potential == Catch::Approx(0.5));
        CHECK(ev.total == Catch::Approx(1.0));
    }

    SECTION("perfectly fitted reversible motion has zero kinetic cost") {
        auto rng = make_rng(300);
        MatrixXd c = random_spd(3, rng);
        MatrixXd d = random_psd(3, rng);
        VectorXd f = random_vector(3, rng);
        VectorXd l = random_vector(3, rng);
        VectorXd ld = c.llt().solve(f);
        LagrangianEval ev = lagrangian(c, f, d, l, ld);
        CHECK(ev.kinetic < 1e-14);
        CHECK(ev.total == Catch::Approx(0.5 * l.dot(d * l)).margin(1e-12));
    }

    SECTION("equilibrium costs nothing") {
        MatrixXd one = MatrixXd::Identity(1, 1);
        LagrangianEval ev =
            lagrangian(one, VectorXd::Zero(1), one, VectorXd::Zero(1), VectorXd::Zero(1));
        CHECK(ev.total == 0.0);
    }
}

TEST_CASE("dual hamiltonian") {
    SECTION("vanishes at the origin") {
        MatrixXd one = MatrixXd::Identity(1, 1);
        CHECK(hamiltonian_dual(one, VectorXd::Zero(1), one, VectorXd::Zero(1),
                               VectorXd::Zero(1)) == 0.0);
    }

    SECTION("near-equilibrium quadratic form when f = J lambda") {
        auto rng = make_rng(301);
        MatrixXd c = random_spd(2, rng);
        MatrixXd d = random_psd(2, rng);
        MatrixXd j = random_antisymmetric(2, rng);
        VectorXd l = random_vector(2, rng), mu = random_vector(2, rng);
        const double lhs = hamiltonian_dual(c, VectorXd(j * l), d, l, mu);
        const double rhs = 0.5 * mu.dot(c.llt().solve(mu)) - l.dot(j * c.llt().solve(mu)) -
                           0.5 * l.dot(d * l);
        CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
    }

    SECTION("legendre round-trip on random points") {
        auto rng = make_rng(302);
        MatrixXd c = random_spd(3, rng);
        MatrixXd d = random_psd(3, rng);
        for (int rep = 0; rep < 100; ++rep) {
            VectorXd f = random_vector(3, rng);
            VectorXd l = random_vector(3, rng);
            VectorXd ld = random_vector(3, rng);
            VectorXd mu = c * ld - f;  // dL/dldot
            const double dual = hamiltonian_dual(c, f, d, l, mu);
            const double direct = ld.dot(mu) - lagrangian(c, f, d, l, ld).total;
            CHECK(dual == Catch::Approx(direct).margin(1e-12));
        }
    }
}

TEST_CASE("adiabatic closure") {
    SECTION("canonical pair rotates rigidly with conserved entropy") {
        const double k = 1.0, beta = 1.0;
        PhaseSystem sys = make_harmonic_1(k, {"q", "p"});
        GaussianCoeffProvider provider(*sys.gaussian, beta, VectorXd::Ones(2));
        VectorXd l0(2);
        l0 << 0.5, 0.0;
        ReducedTrajectory traj = integrate_adiabatic(provider, l0, 20.0, 1e-3);
        const double r0 = traj.a_path.front().norm();
        double worst_radius = 0.0, worst_entropy = 0.0;
        for (int kk = 0; kk < traj.size(); ++kk) {
            worst_radius = std::max(worst_radius, std::abs(traj.a_path[kk].norm() - r0));
            worst_entropy =
                std::max(worst_entropy, std::abs(traj.entropy_path[kk] - traj.entropy_path[0]));
        }
        CHECK(worst_radius < 1e-8);
        CHECK(worst_entropy < 1e-8);
        // rotation frequency sqrt(k): a quarter period swaps the components
        const double quarter = 0.5 * M_PI / std::sqrt(k);
        const auto idx = static_cast<std::size_t>(std::llround(quarter / 1e-3));
        CHECK(traj.a_path[idx][0] == Catch::Approx(0.0).margin(1e-3));
    }

    SECTION("equilibrium is a fixed point") {
        PhaseSystem sys = make_harmonic_1(1.0, {"q", "p"});
        GaussianCoeffProvider provider(*sys.gaussian, 1.0, VectorXd::Ones(2));
        ReducedTrajectory traj = integrate_adiabatic(provider, VectorXd::Zero(2), 1.0, 1e-2);
        for (const auto& l : traj.lambda_path) CHECK(l.norm() == 0.0);
    }

    SECTION("a single even variable does not move (f = 0)") {
        PhaseSystem sys = make_harmonic_1(1.0, {"q"});
        GaussianCoeffProvider provider(*sys.gaussian, 1.0, VectorXd::Ones(1));
        VectorXd l0 = VectorXd::Constant(1, 0.7);
        ReducedTrajectory traj = integrate_adiabatic(provider, l0, 5.0, 1e-2);
        CHECK((traj.lambda_path.back() - l0).norm() < 1e-12);
        CHECK((traj.a_path.back() - traj.a_path.front()).norm() < 1e-12);
    }
}

TEST_CASE("linear closures") {
    MatrixXd one = MatrixXd::Identity(1, 1);
    EquilibriumConstants eqc = constants_from(one, MatrixXd::Zero(1, 1), one);

    SECTION("stationary scalar: a(t) = a0 exp(-t)") {
        ValueHessian vh = solve_are(eqc.c0, eqc.jrev, eqc.d0);
        VectorXd l0 = VectorXd::Constant(1, 0.8);
        ReducedTrajectory traj = integrate_linear(eqc, vh, l0, 5.0, 1e-3);
        for (int k = 0; k < traj.size(); k += 100) {
            CHECK(traj.a_path[k][0] ==
                  Catch::Approx(0.8 * std::exp(-traj.times[k])).margin(1e-9));
        }
    }

    SECTION("nonstationary scalar: a(t) = a0 sech(t) to 1e-6") {
        RiccatiTrajectory mt = solve_riccati_ode(one, MatrixXd::Zero(1, 1), one, 6.0, 1e-4, 10);
        VectorXd l0 = VectorXd::Constant(1, 1.5);
        ReducedTrajectory traj = integrate_linear(eqc, mt, l0, 6.0, 1e-4);
        double worst = 0.0;
        for (int k = 0; k < traj.size(); ++k) {
            worst = std::max(
                worst, std::abs(traj.a_path[k][0] - 1.5 * scalar_decay_envelope(1, 1, traj.times[k])));
        }
        CHECK(worst <= 1e-6);
        // plateau: no production at t = 0, production rising afterwards
        CHECK(traj.production_path[0] == 0.0);
        CHECK(traj.production_path[1] > 0.0);
        CHECK(traj.production_path[100] > traj.production_path[1]);
    }

    SECTION("duality a = C lambda holds exactly along the run") {
        auto rng = make_rng(303);
        MatrixXd c = random_spd(3, rng);
        MatrixXd j = random_antisymmetric(3, rng);
        MatrixXd d = random_spd(3, rng, 0.2);
        EquilibriumConstants e3 = constants_from(c, j, d);
        ValueHessian vh = solve_are(c, j, d);
        VectorXd l0 = random_vector(3, rng);
        ReducedTrajectory traj = integrate_linear(e3, vh, l0, 3.0, 1e-3);
        for (int k = 0; k < traj.size(); k += 50) {
            CHECK((traj.a_path[k] - c * traj.lambda_path[k]).norm() == 0.0);
            // production cross-check: ds/dt = -lambda * da/dt to 1e-10
            const double via_rate = -traj.lambda_path[k].dot(traj.a_rate_path[k]);
            CHECK(std::abs(traj.production_path[k] - via_rate) <= 1e-10);
        }
    }

    SECTION("multivariate even-parity modes decay as sech(sqrt(gamma) t)") {
        auto rng = make_rng(304);
        MatrixXd c = random_spd(3, rng);
        MatrixXd d = random_spd(3, rng, 0.3);
        MatrixXd zero = MatrixXd::Zero(3, 3);
        EquilibriumConstants e3 = constants_from(c, zero, d);
        Diagonalization dg = diagonalize(c, d);
        const double horizon = 4.0;
        RiccatiTrajectory mt = solve_riccati_ode(c, zero, d, horizon, 2e-4, 5);
        VectorXd l0 = random_vector(3, rng);
        ReducedTrajectory traj = integrate_linear(e3, mt, l0, horizon, 2e-4);
        VectorXd b0 = dg.v.transpose() * traj.a_path.front();
        MatrixXd vt_inv = dg.v.transpose().inverse();
        double worst = 0.0;
        for (int k = 0; k < traj.size(); k += 500) {
            VectorXd b(3);
            for (int i = 0; i < 3; ++i) {
                b[i] = b0[i] * scalar_decay_envelope(1.0, dg.gamma[i], traj.times[k]);
            }
            worst = std::max(worst, (traj.a_path[k] - vt_inv * b).norm());
        }
        CHECK(worst <= 1e-7);
    }

    SECTION("M(t) grid shorter than the run is an error") {
        RiccatiTrajectory mt = solve_riccati_ode(one, MatrixXd::Zero(1, 1), one, 1.0, 1e-3);
        CHECK_THROWS_AS(
            integrate_linear(eqc, mt, VectorXd::Constant(1, 1.0), 2.0, 1e-3),
            ValidationError);
    }
}

TEST_CASE("nonlinear stationary closure") {
    SECTION("constant coefficients reduce to the linear stationary closure") {
        auto rng = make_rng(305);
        for (int m : {1, 2, 3}) {
            MatrixXd c = random_spd(m, rng);
            MatrixXd j = random_antisymmetric(m, rng, 0.5);
            MatrixXd d = random_spd(m, rng, 0.3);
            EquilibriumConstants eqc = constants_from(c, j, d);
            ValueHessian vh = solve_are(c, j, d);
            VectorXd l0 = 0.5 * random_vector(m, rng);
            const double t_char = characteristic_time(c, d);
            const double horizon = 2.0 * t_char, dt = t_char / 50.0;
            ReducedTrajectory lin = integrate_linear(eqc, vh, l0, horizon, dt);
            ConstantCoeffProvider provider(c, j, d);
            ReducedTrajectory non = integrate_nonlinear_stationary(provider, l0, horizon, dt);
            double worst = 0.0;
            for (int k = 0; k < lin.size(); ++k) {
                worst = std::max(worst, (lin.lambda_path[k] - non.lambda_path[k]).norm());
            }
            CHECK(worst <= 1e-6);
            CHECK_FALSE(non.convexity_warning);
        }
    }

    SECTION("equilibrium stays put with zero flux") {
        ConstantCoeffProvider provider(MatrixXd::Identity(2, 2),
                                       MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2));
        ReducedTrajectory traj =
            integrate_nonlinear_stationary(provider, VectorXd::Zero(2), 1.0, 0.05);
        for (int k = 0; k < traj.size(); ++k) {
            CHECK(traj.lambda_path[k].norm() == 0.0);
            CHECK(traj.flux_path[k].norm() == 0.0);
        }
    }

    SECTION("state-dependent potential: flux matches the 1-D HJ closed form") {
        CubicPotentialProvider provider;
        VectorXd l0 = VectorXd::Constant(1, 1.2);
        ReducedTrajectory traj = integrate_nonlinear_stationary(provider, l0, 1.5, 0.01);
        for (int k = 0; k < traj.size(); k += 15) {
            const double l = traj.lambda_path[k][0];
            const double mu_expected = -l * std::sqrt(1.0 + l * l);
            CHECK(traj.flux_path[k][0] ==
                  Catch::Approx(mu_expected).epsilon(1e-3).margin(1e-8));
            CHECK(traj.production_path[k] >= -1e-12);
        }
        // the dissipation shortens relaxation against the linear D = D(0) run
        CHECK(traj.lambda_path.back().norm() < 1.2 * std::exp(-1.5) + 0.05);
    }
}

TEST_CASE("thermodynamic bookkeeping") {
    MatrixXd one = MatrixXd::Identity(1, 1);
    EquilibriumConstants eqc = constants_from(one, MatrixXd::Zero(1, 1), one);

    SECTION("adiabatic runs produce no irreversible entropy") {
        PhaseSystem sys = make_harmonic_1(1.0, {"q", "p"});
        GaussianCoeffProvider provider(*sys.gaussian, 1.0, VectorXd::Ones(2));
        VectorXd l0(2);
        l0 << 0.5, 0.2;
        ReducedTrajectory traj = integrate_adiabatic(provider, l0, 5.0, 1e-3);
        EquilibriumConstants e2 =
            constants_from(provider.at(l0).c, MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2));
        ReducedTrajectory aug = thermodynamics(traj, e2);
        for (int k = 0; k < aug.size(); ++k) CHECK(aug.production_path[k] == 0.0);
        CHECK(std::abs(aug.entropy_path.back() - aug.entropy_path.front()) < 1e-10);
    }

    SECTION("scalar stationary: entropy deficit a0^2/2 is recovered by quadrature") {
        const double a0 = 0.9;
        ValueHessian vh = solve_are(one, MatrixXd::Zero(1, 1), one);
        ReducedTrajectory traj =
            integrate_linear(eqc, vh, VectorXd::Constant(1, a0), 12.0, 1e-3);
        ReducedTrajectory aug = thermodynamics(traj, eqc, &vh);
        CHECK(aug.entropy_path.front() == Catch::Approx(-0.5 * a0 * a0).margin(1e-12));
        CHECK(aug.entropy_path.back() == Catch::Approx(0.0).margin(1e-5));
        for (int k = 0; k < aug.size(); ++k) CHECK(aug.production_path[k] >= 0.0);
    }

    SECTION("nonstationary production starts at zero") {
        RiccatiTrajectory mt = solve_riccati_ode(one, MatrixXd::Zero(1, 1), one, 3.0, 1e-3, 5);
        ReducedTrajectory traj = integrate_linear(eqc, mt, VectorXd::Constant(1, 1.0), 3.0, 1e-3);
        ReducedTrajectory aug = thermodynamics(traj, eqc);
        CHECK(aug.production_path[0] == 0.0);
    }

    SECTION("identity ds/dt = 2 v(lambda) is enforced for stationary runs") {
        ValueHessian vh = solve_are(one, MatrixXd::Zero(1, 1), one);
        ReducedTrajectory traj = integrate_linear(eqc, vh, VectorXd::Constant(1, 1.0), 2.0, 1e-3);
        CHECK_NOTHROW(thermodynamics(traj, eqc, &vh));
        // corrupt the flux: the identity check must fire
        ReducedTrajectory bad = traj;
        for (auto& mu : bad.flux_path) mu *= 1.5;
        CHECK_THROWS_AS(thermodynamics(bad, eqc, &vh), ValidationError);
    }
}

TEST_CASE("generic decomposition") {
    SECTION("adiabatic: irreversible part is identically zero") {
        PhaseSystem sys = make_harmonic_1(1.0, {"q", "p"});
        GaussianCoeffProvider provider(*sys.gaussian, 1.0, VectorXd::Ones(2));
        VectorXd l0(2);
        l0 << 0.4, -0.1;
        ReducedTrajectory traj = integrate_adiabatic(provider, l0, 2.0, 1e-3);
        GenericDecomposition dec = generic_decomposition(traj, provider);
        for (const auto& irr : dec.irreversible) CHECK(irr.norm() == 0.0);
        CHECK(dec.max_recomposition_error <= 1e-10);
    }

    SECTION("linear stationary: reversible J lambda plus irreversible -M lambda") {
        auto rng = make_rng(306);
        MatrixXd c = random_spd(2, rng);
        MatrixXd j = random_antisymmetric(2, rng);
        MatrixXd d = random_spd(2, rng, 0.2);
        EquilibriumConstants eqc = constants_from(c, j, d);
        ValueHessian vh = solve_are(c, j, d);
        VectorXd l0 = random_vector(2, rng);
        ReducedTrajectory traj = integrate_linear(eqc, vh, l0, 2.0, 1e-3);
        ConstantCoeffProvider provider(c, j, d);
        GenericDecomposition dec = generic_decomposition(traj, provider);
        CHECK(dec.max_recomposition_error <= 1e-10);
        for (int k = 0; k < traj.size(); k += 100) {
            CHECK((dec.reversible[k] - j * traj.lambda_path[k]).norm() <= 1e-12);
            CHECK((dec.irreversible[k] + vh.m * traj.lambda_path[k]).norm() <= 1e-12);
        }
    }
}
