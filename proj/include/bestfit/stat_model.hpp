// Quasi-equilibrium statistical models: exponential tilts of the Gibbs
// density by the resolved variables, exp(-beta H + lambda*A - psi), in both
// the fixed-temperature and fixed-energy variants. Provides sampling, score
// vectors, macrostates, and observable normalization.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bestfit/errors.hpp"
#include "bestfit/gaussian.hpp"
#include "bestfit/phase_system.hpp"
#include "bestfit/rng.hpp"
#include "bestfit/stats.hpp"

namespace bestfit {

enum class ModelVariant { FixedBeta, FixedEnergy };

struct SamplerConfig {
    int burn_in = 10000;
    int thinning = 10;
    double guard_radius = 1e6;
    // fixed-energy solves draw this many points per mean-energy evaluation
    int beta_solve_points = 20000;
};

struct StatModel {
    PhaseSystem system;
    ModelVariant variant = ModelVariant::FixedBeta;
    double fixed_beta = 1.0;     // used when variant == FixedBeta
    double fixed_energy = 0.0;   // used when variant == FixedEnergy
    VectorXd lambda;
    double beta_of_lambda = 1.0;  // the fixed beta, or the solved beta(lambda)
    SamplerConfig sampler;
};

struct Provenance {
    std::string kind;  // "exact-gaussian" or "metropolis"
    std::uint64_t seed = 0;
    int burn_in = 0;
    int thinning = 0;
    double acceptance_rate = 1.0;
    bool flagged = false;  // acceptance outside [0.1, 0.9]
};

struct EnsembleSample {
    MatrixXd points;    // 2n x N, one phase point per column
    VectorXd weights;   // non-negative, sums to 1
    Provenance provenance;

    int count() const { return static_cast<int>(points.cols()); }
};

struct ThermoState {
    VectorXd a;
    double u = 0.0;
    std::optional<double> s;  // absolute entropy; closed form exists only for
                              // Gaussian systems, otherwise track differences
    VectorXd lambda;
    double beta = 0.0;
};

// ------------------------------- evaluation --------------------------------

inline MatrixXd observable_values(const PhaseSystem& sys, const MatrixXd& points) {
    const int m = sys.num_observables();
    const int n_pts = static_cast<int>(points.cols());
    MatrixXd a(m, n_pts);
    for (int j = 0; j < n_pts; ++j) {
        const VectorXd z = points.col(j);
        for (int k = 0; k < m; ++k) a(k, j) = sys.observables[k].value(z);
    }
    return a;
}

inline VectorXd hamiltonian_values(const PhaseSystem& sys, const MatrixXd& points) {
    const int n_pts = static_cast<int>(points.cols());
    VectorXd h(n_pts);
    for (int j = 0; j < n_pts; ++j) h[j] = sys.hamiltonian(points.col(j));
    return h;
}

// ------------------------------- beta solve --------------------------------

namespace detail {

struct EnergyEstimate {
    double mean;
    double se;
};

// Monte Carlo mean energy at a trial beta; used by the fixed-energy solve on
// systems without Gaussian structure.
EnergyEstimate mc_mean_energy(const StatModel& model, double beta, std::uint64_t seed);

}  // namespace detail

// beta(lambda) such that <H | rho(beta, lambda)> = fixed_energy. The mean
// energy is strictly decreasing in beta (convexity of the log-partition
// function), so a log-space bisection bracket followed by Newton refinement
// cannot escape.
inline double solve_beta(const StatModel& model, std::uint64_t seed = 12345) {
    if (model.variant != ModelVariant::FixedEnergy) {
        throw std::invalid_argument("solve_beta: model is not fixed-energy");
    }
    const double energy = model.fixed_energy;
    if (model.system.gaussian) {
        return GaussianModel::solve_beta(*model.system.gaussian, model.lambda, energy);
    }
    // MC path: bisect on the noisy mean-energy curve until within 2 standard
    // errors, shrinking the bracket in log space.
    double lo = 1e-6, hi = 1e6;
    auto eval = [&](double b, int it) {
        return detail::mc_mean_energy(model, b, seed + static_cast<std::uint64_t>(it));
    };
    auto at_lo = eval(lo, 0);
    auto at_hi = eval(hi, 1);
    if (at_lo.mean < energy || at_hi.mean > energy) {
        throw SolverError("solve_beta: energy " + std::to_string(energy) +
                          " not bracketed by beta in [1e-6, 1e6]");
    }
    double best = std::sqrt(lo * hi);
    for (int it = 2; it < 60; ++it) {
        best = std::sqrt(lo * hi);
        auto est = eval(best, it);
        if (std::abs(est.mean - energy) <= 2.0 * est.se) return best;
        if (est.mean > energy)
            lo = best;
        else
            hi = best;
    }
    return best;
}

inline StatModel make_model(PhaseSystem sys, ModelVariant variant, double beta_or_energy,
                            VectorXd lambda, SamplerConfig sampler = {}) {
    StatModel model;
    model.system = std::move(sys);
    model.variant = variant;
    model.lambda = std::move(lambda);
    model.sampler = sampler;
    if (static_cast<int>(model.lambda.size()) != model.system.num_observables()) {
        throw std::invalid_argument("make_model: lambda size must match observable count");
    }
    if (variant == ModelVariant::FixedBeta) {
        if (beta_or_energy <= 0) throw ConfigError("make_model: beta must be positive");
        model.fixed_beta = beta_or_energy;
        model.beta_of_lambda = beta_or_energy;
    } else {
        model.fixed_energy = beta_or_energy;
        model.beta_of_lambda = solve_beta(model);
    }
    return model;
}

// --------------------------------- sampling --------------------------------

namespace detail {

inline EnsembleSample sample_exact_gaussian(const StatModel& model, int count,
                                            std::uint64_t seed) {
    GaussianModel g(*model.system.gaussian, model.beta_of_lambda);
    auto rng = make_rng(seed, 0);
    EnsembleSample out;
    out.points = g.sample(model.lambda, count, rng);
    out.weights = VectorXd::Constant(count, 1.0 / count);
    out.provenance = {"exact-gaussian", seed, 0, 1, 1.0, false};
    return out;
}

// Random-walk Metropolis with a diagonal Gaussian proposal. The global step
// is tuned during burn-in towards acceptance in [0.3, 0.5]; per-component
// scales are adapted from the running marginal spread.
inline EnsembleSample sample_metropolis(const StatModel& model, int count, std::uint64_t seed) {
    const PhaseSystem& sys = model.system;
    const int dim = sys.dim();
    const double beta = model.beta_of_lambda;
    const SamplerConfig& cfg = model.sampler;

    auto log_target = [&](const VectorXd& z) {
        double lt = -beta * sys.hamiltonian(z);
        for (int k = 0; k < sys.num_observables(); ++k) {
            lt += model.lambda[k] * sys.observables[k].value(z);
        }
        return lt;
    };

    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    VectorXd z = VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) z[i] = 0.1 * gauss(rng);
    double lp = log_target(z);

    double step = 0.5 / std::sqrt(static_cast<double>(dim));
    VectorXd scale = VectorXd::Ones(dim);
    VectorXd mean_acc = VectorXd::Zero(dim), var_acc = VectorXd::Zero(dim);
    int var_count = 0;

    VectorXd prop(dim);
    int accepted_window = 0, window = 0;
    const int window_size = 200;

    auto do_step = [&](bool tuning) {
        for (int i = 0; i < dim; ++i) prop[i] = z[i] + step * scale[i] * gauss(rng);
        const double lp_new = log_target(prop);
        if (std::log(unif(rng)) < lp_new - lp) {
            z = prop;
            lp = lp_new;
            ++accepted_window;
        }
        if (z.lpNorm<Eigen::Infinity>() > cfg.guard_radius) {
            throw SamplingError("metropolis: chain escaped guard radius; the tilted density "
                                "appears non-normalizable");
        }
        ++window;
        if (tuning && window == window_size) {
            const double rate = static_cast<double>(accepted_window) / window_size;
            if (rate < 0.3) step /= 1.3;
            if (rate > 0.5) step *= 1.3;
            accepted_window = 0;
            window = 0;
        }
    };

    const int half = cfg.burn_in / 2;
    for (int it = 0; it < half; ++it) do_step(true);
    // second half of burn-in: accumulate marginal spreads, keep tuning
    for (int it = 0; it < cfg.burn_in - half; ++it) {
        do_step(true);
        ++var_count;
        for (int i = 0; i < dim; ++i) {
            const double d = z[i] - mean_acc[i];
            mean_acc[i] += d / var_count;
            var_acc[i] += d * (z[i] - mean_acc[i]);
        }
    }
    if (var_count > 10) {
        VectorXd sd = (var_acc / var_count).cwiseSqrt();
        const double floor = 1e-3 * sd.maxCoeff() + 1e-12;
        for (int i = 0; i < dim; ++i) scale[i] = std::max(sd[i], floor);
        step = 0.5;  // retune the global factor for the new scales
        for (int it = 0; it < half / 2; ++it) do_step(true);
    }

    accepted_window = 0;
    window = 0;
    EnsembleSample out;
    out.points.resize(dim, count);
    long long accepted_total = 0, total = 0;
    for (int kept = 0; kept < count; ++kept) {
        for (int t = 0; t < cfg.thinning; ++t) {
            const int before = accepted_window;
            do_step(false);
            accepted_total += accepted_window - before;
            ++total;
        }
        out.points.col(kept) = z;
    }
    out.weights = VectorXd::Constant(count, 1.0 / count);
    const double rate = total > 0 ? static_cast<double>(accepted_total) / total : 0.0;
    out.provenance = {"metropolis", seed, cfg.burn_in, cfg.thinning, rate,
                      rate < 0.1 || rate > 0.9};
    return out;
}

inline detail::EnergyEstimate mc_mean_energy(const StatModel& model, double beta,
                                             std::uint64_t seed) {
    StatModel trial = model;
    trial.beta_of_lambda = beta;
    EnsembleSample s = sample_metropolis(trial, model.sampler.beta_solve_points, seed);
    VectorXd h = hamiltonian_values(model.system, s.points);
    auto est = batch_mean(h);
    return {est.mean, est.se};
}

}  // namespace detail

// Draw N points from the model. Gaussian systems use the exact sampler;
// everything else runs random-walk Metropolis. Deterministic given
// (model config, seed).
inline EnsembleSample sample(const StatModel& model, int count, std::uint64_t seed) {
    if (count < 10) throw std::invalid_argument("sample: need at least 10 points");
    if (!model.lambda.allFinite()) throw std::invalid_argument("sample: lambda must be finite");
    if (model.system.gaussian) return detail::sample_exact_gaussian(model, count, seed);
    return detail::sample_metropolis(model, count, seed);
}

// ---------------------------------- scores ---------------------------------

// Per-point score vectors, one column per sample point. Fixed-beta scores are
// the centered observables; fixed-energy scores are additionally projected
// orthogonal to the centered Hamiltonian, with coefficients estimated on the
// sample so that both centering and orthogonality hold exactly.
inline MatrixXd score(const StatModel& model, const EnsembleSample& sample) {
    MatrixXd a = observable_values(model.system, sample.points);
    VectorXd mean = a.rowwise().mean();
    MatrixXd u = a.colwise() - mean;
    if (model.variant == ModelVariant::FixedEnergy) {
        VectorXd h = hamiltonian_values(model.system, sample.points);
        VectorXd hc = h.array() - h.mean();
        const double var_h = hc.squaredNorm() / hc.size();
        if (var_h < 1e-12) {
            throw SamplingError("score: energy fluctuation below 1e-12; the fixed-energy "
                                "projection is degenerate");
        }
        VectorXd coef = u * hc / (var_h * hc.size());  // cov(A, H) / var(H)
        u.noalias() -= coef * hc.transpose();
    }
    return u;
}

// -------------------------------- macrostate -------------------------------

inline ThermoState macrostate(const StatModel& model, const EnsembleSample& sample) {
    ThermoState st;
    MatrixXd a = observable_values(model.system, sample.points);
    st.a = a.rowwise().mean();
    st.u = hamiltonian_values(model.system, sample.points).mean();
    st.lambda = model.lambda;
    st.beta = model.beta_of_lambda;
    if (model.system.gaussian) {
        GaussianModel g(*model.system.gaussian, model.beta_of_lambda);
        // fixed beta: free-energy entropy relative to equilibrium, the
        // potential with -ds/da = lambda at constant temperature;
        // fixed energy: absolute max-ent entropy s(E, a)
        st.s = model.variant == ModelVariant::FixedBeta ? g.relative_entropy(model.lambda)
                                                        : g.entropy(model.lambda);
    }
    return st;
}

// -------------------------- observable normalization ------------------------

struct NormalizeOptions {
    // Zero out energy-projection coefficients statistically indistinguishable
    // from zero (|alpha| <= 3 se); keeps exactly-symmetric observables exact
    // and preserves Gaussian structure where it genuinely holds.
    bool zero_insignificant_alpha = true;
};

struct NormalizeResult {
    PhaseSystem system;
    VectorXd shift;   // <A>_eq estimates
    VectorXd alpha;   // energy-projection coefficients
    VectorXd alpha_se;
    double energy = 0.0;  // <H>_eq estimate
};

// Replace A_i by A_i - <A_i> - alpha_i (H - E) with
// alpha_i = cov(A_i, H)/var(H), so the normalized observables satisfy
// <A'> = 0 and <A'(H-E)> = 0 on the equilibrium sample.
inline NormalizeResult normalize_observables(const PhaseSystem& sys,
                                             const EnsembleSample& eq_sample,
                                             NormalizeOptions opts = {}) {
    const int m = sys.num_observables();
    MatrixXd a = observable_values(sys, eq_sample.points);
    VectorXd h = hamiltonian_values(sys, eq_sample.points);
    const int n_pts = static_cast<int>(h.size());

    VectorXd shift = a.rowwise().mean();
    const double energy = h.mean();
    VectorXd hc = h.array() - energy;
    const double var_h = hc.squaredNorm() / n_pts;
    if (var_h < 1e-12) {
        throw SamplingError("normalize_observables: energy fluctuation below 1e-12");
    }
    MatrixXd ac = a.colwise() - shift;
    VectorXd alpha = ac * hc / (var_h * n_pts);

    // batch-means error bars for alpha
    auto ranges = batch_ranges(n_pts);
    MatrixXd batch_alpha(static_cast<Eigen::Index>(ranges.size()), m);
    for (std::size_t b = 0; b < ranges.size(); ++b) {
        const int lo = ranges[b].first, len = ranges[b].second - ranges[b].first;
        VectorXd hb = hc.segment(lo, len);
        const double vh = hb.squaredNorm() / len;
        batch_alpha.row(static_cast<Eigen::Index>(b)) =
            (ac.middleCols(lo, len) * hb / (vh * len)).transpose();
    }
    VectorXd alpha_se = stderr_from_batches(batch_alpha);

    if (opts.zero_insignificant_alpha) {
        for (int i = 0; i < m; ++i) {
            if (std::abs(alpha[i]) <= 3.0 * alpha_se[i]) alpha[i] = 0.0;
        }
    }

    PhaseSystem out = sys;
    for (int i = 0; i < m; ++i) {
        const Observable& base = sys.observables[i];
        const double sh = shift[i], al = alpha[i], en = energy;
        auto h_fn = sys.hamiltonian;
        auto h_grad = sys.grad_h;
        out.observables[i].name = base.name;
        out.observables[i].value = [base, h_fn, sh, al, en](const VectorXd& z) {
            return base.value(z) - sh - al * (h_fn(z) - en);
        };
        out.observables[i].gradient = [base, h_grad, al](const VectorXd& z) {
            if (al == 0.0) return base.gradient(z);
            return VectorXd(base.gradient(z) - al * h_grad(z));
        };
    }
    if (sys.gaussian) {
        if ((alpha.array() == 0.0).all()) {
            GaussianInfo gi = *sys.gaussian;
            gi.obs_offset -= shift;
            out.gaussian = gi;
        } else {
            out.gaussian.reset();  // projection by H makes observables quadratic
        }
    }

    // normalized observables must stay linearly independent; the floor is set
    // by the original observable scale so a collapse to zero is caught
    MatrixXd anew = observable_values(out, eq_sample.points);
    MatrixXd anc = anew.colwise() - anew.rowwise().mean().eval();
    MatrixXd gram = anc * anc.transpose() / n_pts;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
    const double orig_scale = (ac * ac.transpose() / n_pts).trace();
    const double floor = 1e-8 * orig_scale / m;
    if (es.eigenvalues().minCoeff() <= floor) {
        Eigen::Index worst = 0;
        es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
        throw SamplingError("normalize_observables: observables rank-deficient after "
                            "normalization (null direction dominated by '" +
                            sys.observables[static_cast<int>(worst)].name + "')");
    }

    return {std::move(out), shift, alpha, alpha_se, energy};
}

}  // namespace bestfit
