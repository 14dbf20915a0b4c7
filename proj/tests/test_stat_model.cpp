#include <catch2/catch_amalgamated.hpp>

#include <bestfit/gaussian.hpp>
#include <bestfit/phase_system.hpp>
#include <bestfit/stat_model.hpp>
#include <bestfit/stats.hpp>

#include <cmath>

using namespace bestfit;

namespace {

StatModel tilted_oscillator(double k, double beta, double lambda) {
    VectorXd l(1);
    l << lambda;
    return make_model(make_harmonic_1(k, {"q"}), ModelVariant::FixedBeta, beta, l);
}

}  // namespace

TEST_CASE("exact gaussian sampling moments") {
    SECTION("equilibrium: mean 0, variance 1/(beta k)") {
        StatModel model = tilted_oscillator(1.0, 1.0, 0.0);
        EnsembleSample s = sample(model, 100000, 42);
        VectorXd q = s.points.row(0);
        auto mq = batch_mean(q);
        CHECK(std::abs(mq.mean) < 3.0 * mq.se);
        VectorXd q2 = q.array().square();
        auto mq2 = batch_mean(q2);
        CHECK(std::abs(mq2.mean - 1.0) < 3.0 * mq2.se);
    }

    SECTION("tilt shifts the mean to lambda/(beta k)") {
        StatModel model = tilted_oscillator(1.0, 1.0, 0.5);
        EnsembleSample s = sample(model, 100000, 43);
        auto mq = batch_mean(VectorXd(s.points.row(0)));
        CHECK(std::abs(mq.mean - 0.5) < 3.0 * mq.se);
    }

    SECTION("weights are uniform and normalized") {
        StatModel model = tilted_oscillator(1.0, 1.0, 0.5);
        EnsembleSample s = sample(model, 1000, 44);
        CHECK(std::abs(s.weights.sum() - 1.0) < 1e-12);
        CHECK((s.weights.array() == s.weights[0]).all());
    }

    SECTION("deterministic given the seed") {
        StatModel model = tilted_oscillator(1.0, 1.0, 0.5);
        EnsembleSample s1 = sample(model, 500, 7);
        EnsembleSample s2 = sample(model, 500, 7);
        CHECK((s1.points - s2.points).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("metropolis sampling agrees with exact gaussian moments") {
    // same tilted oscillator, gaussian metadata stripped to force MCMC
    StatModel model = tilted_oscillator(1.0, 1.0, 0.5);
    model.system.gaussian.reset();
    EnsembleSample s = sample(model, 100000, 45);
    CHECK(s.provenance.kind == "metropolis");
    CHECK_FALSE(s.provenance.flagged);
    CHECK(s.provenance.acceptance_rate > 0.1);
    CHECK(s.provenance.acceptance_rate < 0.9);
    auto mq = batch_mean(VectorXd(s.points.row(0)));
    CHECK(std::abs(mq.mean - 0.5) < 3.0 * mq.se);
    VectorXd qc = s.points.row(0).array() - mq.mean;
    auto vq = batch_mean(VectorXd(qc.array().square()));
    CHECK(std::abs(vq.mean - 1.0) < 3.0 * vq.se);
}

TEST_CASE("metropolis flags non-normalizable tilts") {
    // quadratic well undermined by an inverted quartic: the chain escapes
    PhaseSystem sys;
    sys.n = 1;
    sys.name = "runaway";
    sys.hamiltonian = [](const VectorXd& z) {
        return 0.5 * z[1] * z[1] + 0.5 * z[0] * z[0] - 0.05 * std::pow(z[0], 4);
    };
    sys.grad_h = [](const VectorXd& z) {
        VectorXd g(2);
        g[0] = z[0] - 0.2 * std::pow(z[0], 3);
        g[1] = z[1];
        return g;
    };
    sys.observables.push_back({"q", [](const VectorXd& z) { return z[0]; },
                               [](const VectorXd&) { return VectorXd(Eigen::Vector2d(1, 0)); }});
    StatModel model;
    model.system = sys;
    model.variant = ModelVariant::FixedBeta;
    model.fixed_beta = 1.0;
    model.beta_of_lambda = 1.0;
    model.lambda = VectorXd::Zero(1);
    model.sampler.burn_in = 400000;
    CHECK_THROWS_AS(sample(model, 100000, 11), SamplingError);
}

TEST_CASE("solve_beta for the fixed-energy model") {
    SECTION("lambda = 0 recovers the defining beta") {
        // E = <H> at beta = 2 is n/beta = 0.5
        VectorXd l = VectorXd::Zero(1);
        StatModel model = make_model(make_harmonic_1(1.0, {"q"}), ModelVariant::FixedEnergy, 0.5, l);
        CHECK(model.beta_of_lambda == Catch::Approx(2.0).epsilon(1e-6));
    }

    SECTION("matches the analytic gaussian energy curve at small lambda") {
        // <H>(beta, lambda) = 1/beta + lambda^2/(2 beta^2 k); root solved here
        // by bisection on the closed form as the oracle
        const double k = 2.0, energy = 1.0, lam = 0.3;
        auto mean_energy = [k, lam](double b) { return 1.0 / b + lam * lam / (2.0 * b * b * k); };
        double lo = 0.1, hi = 10.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (mean_energy(mid) > energy ? lo : hi) = mid;
        }
        VectorXd l(1);
        l << lam;
        StatModel model = make_model(make_harmonic_1(k, {"q"}), ModelVariant::FixedEnergy, energy, l);
        CHECK(model.beta_of_lambda == Catch::Approx(0.5 * (lo + hi)).epsilon(1e-3));
    }

    SECTION("beta(lambda) = beta(-lambda) for a linear observable") {
        VectorXd lp(1), lm(1);
        lp << 0.4;
        lm << -0.4;
        StatModel a = make_model(make_harmonic_1(1.0, {"q"}), ModelVariant::FixedEnergy, 1.2, lp);
        StatModel b = make_model(make_harmonic_1(1.0, {"q"}), ModelVariant::FixedEnergy, 1.2, lm);
        CHECK(a.beta_of_lambda == Catch::Approx(b.beta_of_lambda).epsilon(1e-10));
    }

    SECTION("unattainable energy errors out") {
        StatModel model;
        model.system = make_harmonic_1(1.0, {"q"});
        model.variant = ModelVariant::FixedEnergy;
        model.fixed_energy = -1.0;  // below inf H = 0
        model.lambda = VectorXd::Zero(1);
        CHECK_THROWS_AS(solve_beta(model), SolverError);
    }

    SECTION("fixed-energy invariant holds after the solve") {
        VectorXd l(1);
        l << 0.5;
        StatModel model = make_model(make_harmonic_1(1.0, {"q"}), ModelVariant::FixedEnergy, 2.0, l);
        EnsembleSample s = sample(model, 100000, 46);
        auto uh = batch_mean(hamiltonian_values(model.system, s.points));
        CHECK(std::abs(uh.mean - 2.0) < 3.0 * uh.se);
    }

    SECTION("MC path solves beta on a non-gaussian system") {
        // fpu chain at lambda = 0; target E from a reference run at beta = 1
        PhaseSystem sys = make_fpu_beta(4, 1.0, 0.5, {"mode_q_1"});
        StatModel ref;
        ref.system = sys;
        ref.variant = ModelVariant::FixedBeta;
        ref.fixed_beta = 1.0;
        ref.beta_of_lambda = 1.0;
        ref.lambda = VectorXd::Zero(1);
        EnsembleSample s = sample(ref, 40000, 99);
        const double energy = hamiltonian_values(sys, s.points).mean();
        StatModel model = make_model(sys, ModelVariant::FixedEnergy, energy,
                                     VectorXd::Zero(1));
        CHECK(model.beta_of_lambda == Catch::Approx(1.0).epsilon(0.1));
    }
}

TEST_CASE("score vectors") {
    SECTION("fixed-beta scores are exactly centered with variance 1/(beta k)") {
        StatModel model = tilted_oscillator(1.0, 1.0, 0.0);
        EnsembleSample s = sample(model, 100000, 47);
        MatrixXd u = score(model, s);
        CHECK(std::abs(u.row(0).mean()) < 1e-12);
        auto var = batch_mean(VectorXd(u.row(0).array().square()));
        CHECK(std::abs(var.mean - 1.0) < 3.0 * var.se);
    }

    SECTION("fixed-energy scores are exactly orthogonal to the centered energy") {
        VectorXd l(1);
        l << 0.3;
        StatModel model = make_model(make_harmonic_1(1.0, {"q"}), ModelVariant::FixedEnergy, 1.5, l);
        EnsembleSample s = sample(model, 20000, 48);
        MatrixXd u = score(model, s);
        VectorXd h = hamiltonian_values(model.system, s.points);
        VectorXd hc = h.array() - h.mean();
        CHECK(std::abs(u.row(0).mean()) < 1e-12);
        CHECK(std::abs(u.row(0).dot(hc) / hc.size()) < 1e-10);
    }
}

TEST_CASE("macrostate and the entropy structure") {
    SECTION("equilibrium macrostate vanishes for centered observables") {
        StatModel model = tilted_oscillator(1.0, 1.0, 0.0);
        EnsembleSample s = sample(model, 100000, 49);
        ThermoState st = macrostate(model, s);
        CHECK(std::abs(st.a[0]) < 0.02);
        CHECK(st.s.has_value());
    }

    SECTION("relative entropy of the tilt: s(a) - s(0) = -lambda^2 C / 2") {
        StatModel eq = tilted_oscillator(1.0, 1.0, 0.0);
        StatModel tilted = tilted_oscillator(1.0, 1.0, 0.5);
        EnsembleSample s0 = sample(eq, 100000, 50);
        EnsembleSample s1 = sample(tilted, 100000, 51);
        ThermoState st0 = macrostate(eq, s0);
        ThermoState st1 = macrostate(tilted, s1);
        REQUIRE(st0.s.has_value());
        REQUIRE(st1.s.has_value());
        CHECK(std::abs(st1.a[0] - 0.5) < 0.05);
        CHECK(*st1.s - *st0.s == Catch::Approx(-0.125).epsilon(5e-2));
    }

    SECTION("legendre consistency: -s = -beta u + lambda a - psi") {
        GaussianModel g(*make_harmonic_1(1.0, {"q"}).gaussian, 1.0);
        VectorXd l(1);
        l << 0.7;
        const double lhs = -g.entropy(l);
        const double rhs = -1.0 * g.mean_energy(l) + l.dot(g.macrostate(l)) - g.log_partition(l);
        CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
    }

    SECTION("duality round-trip: -ds/da recovers lambda by finite differences") {
        const double k = 2.0, beta = 1.5;
        GaussianModel g(*make_harmonic_1(k, {"q", "p"}).gaussian, beta);
        VectorXd l(2);
        l << 0.4, -0.2;
        const double h = 1e-5;
        // ds/da = C^{-1} ds/dlambda with C = da/dlambda, at fixed temperature
        VectorXd ds(2);
        for (int i = 0; i < 2; ++i) {
            VectorXd lp = l, lm = l;
            lp[i] += h;
            lm[i] -= h;
            ds[i] = (g.relative_entropy(lp) - g.relative_entropy(lm)) / (2 * h);
        }
        VectorXd lambda_back = -g.fisher().ldlt().solve(ds);
        CHECK((lambda_back - l).norm() < 1e-2 * l.norm());
    }
}

TEST_CASE("normalize_observables") {
    SECTION("already-normalized observables are a fixed point") {
        StatModel eq = tilted_oscillator(1.0, 1.0, 0.0);
        EnsembleSample s = sample(eq, 50000, 52);
        NormalizeResult res = normalize_observables(eq.system, s);
        CHECK(res.alpha[0] == 0.0);  // parity makes the estimate insignificant
        CHECK(std::abs(res.shift[0]) < 0.02);
        CHECK(res.system.gaussian.has_value());
    }

    SECTION("A = H is rejected as rank-deficient") {
        PhaseSystem sys = make_harmonic_1(1.0, {"h"});
        StatModel model;
        model.system = sys;
        model.variant = ModelVariant::FixedBeta;
        model.fixed_beta = 1.0;
        model.beta_of_lambda = 1.0;
        model.lambda = VectorXd::Zero(1);
        model.system.gaussian.reset();
        EnsembleSample s = sample(model, 20000, 53);
        CHECK_THROWS_AS(normalize_observables(sys, s), SamplingError);
    }

    SECTION("quadratic observable gets the gaussian-moment coefficient alpha = 1/k") {
        const double k = 2.0;
        PhaseSystem sys = make_harmonic_1(k, {"q2"});
        StatModel model;
        model.system = sys;
        model.variant = ModelVariant::FixedBeta;
        model.fixed_beta = 1.0;
        model.beta_of_lambda = 1.0;
        model.lambda = VectorXd::Zero(1);
        EnsembleSample s = sample(model, 200000, 54);
        NormalizeResult res = normalize_observables(sys, s);
        CHECK(res.alpha[0] == Catch::Approx(1.0 / k).epsilon(1e-2));
        // both normalization conditions hold on the sample
        MatrixXd a = observable_values(res.system, s.points);
        VectorXd h = hamiltonian_values(res.system, s.points);
        VectorXd hc = h.array() - h.mean();
        CHECK(std::abs(a.row(0).mean()) < 1e-10);
        CHECK(std::abs(a.row(0).dot(hc) / hc.size()) < 1e-10);
    }
}
