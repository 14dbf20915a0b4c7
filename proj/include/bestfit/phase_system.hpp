// Finite-dimensional canonical Hamiltonian systems: phase points z = (q, p),
// Poisson brackets, observables, and the built-in model systems.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bestfit/errors.hpp"
#include "bestfit/linalg.hpp"

namespace bestfit {

constexpr int kMaxDegreesOfFreedom = 10000;

// A scalar function on phase space together with its gradient.
struct Observable {
    std::string name;
    std::function<double(const VectorXd&)> value;
    std::function<VectorXd(const VectorXd&)> gradient;
};

// Metadata for systems whose Hamiltonian is H = p*p/2 + q*K q/2 with linear
// observables A = G z + offset. Set only by construction, never inferred; it
// unlocks exact sampling and closed-form coefficient providers.
struct GaussianInfo {
    MatrixXd stiffness;  // K, n x n SPD
    MatrixXd obs_rows;   // G, m x 2n
    VectorXd obs_offset;  // constant shift per observable (A = Gz + offset)
};

struct PhaseSystem {
    int n = 0;  // degrees of freedom; phase dimension is 2n
    std::string name;
    std::function<double(const VectorXd&)> hamiltonian;
    std::function<VectorXd(const VectorXd&)> grad_h;
    std::vector<Observable> observables;
    bool separable = true;  // H = p*p/2 + V(q); enables the Verlet integrator
    std::optional<GaussianInfo> gaussian;

    int dim() const { return 2 * n; }
    int num_observables() const { return static_cast<int>(observables.size()); }
};

// {F, G} = (grad F)* J_sym (grad G) with J_sym = [[0, I], [-I, 0]].
inline double poisson_bracket(const PhaseSystem& sys, const VectorXd& f_grad,
                              const VectorXd& g_grad) {
    if (f_grad.size() != sys.dim() || g_grad.size() != sys.dim()) {
        throw std::invalid_argument("poisson_bracket: gradient length must be 2n");
    }
    const int n = sys.n;
    // sum_k (dF/dq_k dG/dp_k - dF/dp_k dG/dq_k)
    return f_grad.head(n).dot(g_grad.tail(n)) - f_grad.tail(n).dot(g_grad.head(n));
}

// (L A_k)(z) = {A_k, H}(z)
inline double liouville_action(const PhaseSystem& sys, int obs_index, const VectorXd& z) {
    if (obs_index < 0 || obs_index >= sys.num_observables()) {
        throw std::invalid_argument("liouville_action: observable index out of range");
    }
    return poisson_bracket(sys, sys.observables[obs_index].gradient(z), sys.grad_h(z));
}

// Central-difference gradient for user systems that do not supply one.
inline std::function<VectorXd(const VectorXd&)> numeric_gradient(
    std::function<double(const VectorXd&)> f) {
    return [f = std::move(f)](const VectorXd& z) {
        VectorXd g(z.size());
        VectorXd zp = z, zm = z;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double h = 1e-6 * (1.0 + std::abs(z[i]));
            zp[i] = z[i] + h;
            zm[i] = z[i] - h;
            g[i] = (f(zp) - f(zm)) / (2.0 * h);
            zp[i] = z[i];
            zm[i] = z[i];
        }
        return g;
    };
}

// Verifies grad_h against central differences of H at sampled points.
// Returns the worst relative error seen.
inline double gradient_consistency_error(const PhaseSystem& sys, const std::vector<VectorXd>& points) {
    auto numeric = numeric_gradient(sys.hamiltonian);
    double worst = 0.0;
    for (const auto& z : points) {
        const VectorXd ga = sys.grad_h(z);
        const VectorXd gn = numeric(z);
        const double scale = std::max(1.0, ga.norm());
        worst = std::max(worst, (ga - gn).norm() / scale);
    }
    return worst;
}

namespace detail {

inline void check_dof(int n) {
    if (n < 1) throw ConfigError("system: degrees of freedom must be positive");
    if (n > kMaxDegreesOfFreedom) {
        throw ConfigError("system: n = " + std::to_string(n) + " exceeds the cap of " +
                          std::to_string(kMaxDegreesOfFreedom) + " degrees of freedom");
    }
}

// Fixed-end chain mode vector: e_j(i) = sqrt(2/(n+1)) sin(i j pi / (n+1)).
inline VectorXd chain_mode(int n, int j) {
    VectorXd e(n);
    const double norm = std::sqrt(2.0 / (n + 1));
    for (int i = 1; i <= n; ++i) e[i - 1] = norm * std::sin(i * j * M_PI / (n + 1));
    return e;
}

inline Observable linear_observable(std::string name, const VectorXd& row) {
    VectorXd r = row;
    return {std::move(name), [r](const VectorXd& z) { return r.dot(z); },
            [r](const VectorXd&) { return r; }};
}

}  // namespace detail

// --------------------------------- built-ins --------------------------------
//
// Each factory takes the requested observable names; Gaussian metadata is
// attached only when the Hamiltonian is quadratic and every selected
// observable is linear.

// Single oscillator H = p^2/2 + k q^2/2. Observables: q, p, q2 (= q^2), h (= H).
inline PhaseSystem make_harmonic_1(double k, const std::vector<std::string>& obs_names) {
    if (k <= 0) throw ConfigError("harmonic-1: k must be positive");
    PhaseSystem sys;
    sys.n = 1;
    sys.name = "harmonic-1";
    sys.hamiltonian = [k](const VectorXd& z) { return 0.5 * z[1] * z[1] + 0.5 * k * z[0] * z[0]; };
    sys.grad_h = [k](const VectorXd& z) {
        VectorXd g(2);
        g[0] = k * z[0];
        g[1] = z[1];
        return g;
    };
    bool all_linear = true;
    MatrixXd rows(static_cast<Eigen::Index>(obs_names.size()), 2);
    for (std::size_t i = 0; i < obs_names.size(); ++i) {
        const std::string& nm = obs_names[i];
        if (nm == "q") {
            sys.observables.push_back(detail::linear_observable("q", Eigen::Vector2d(1, 0)));
            rows.row(static_cast<Eigen::Index>(i)) << 1, 0;
        } else if (nm == "p") {
            sys.observables.push_back(detail::linear_observable("p", Eigen::Vector2d(0, 1)));
            rows.row(static_cast<Eigen::Index>(i)) << 0, 1;
        } else if (nm == "q2") {
            sys.observables.push_back({"q2", [](const VectorXd& z) { return z[0] * z[0]; },
                                       [](const VectorXd& z) {
                                           VectorXd g(2);
                                           g[0] = 2 * z[0];
                                           g[1] = 0;
                                           return g;
                                       }});
            all_linear = false;
        } else if (nm == "h") {
            sys.observables.push_back({"h", sys.hamiltonian, sys.grad_h});
            all_linear = false;
        } else {
            throw ConfigError("harmonic-1: unknown observable '" + nm + "'");
        }
    }
    if (all_linear) {
        sys.gaussian = GaussianInfo{MatrixXd::Constant(1, 1, k), rows,
                                    VectorXd::Zero(rows.rows())};
    }
    return sys;
}

// Chain of n unit-mass oscillators with fixed ends and nearest-neighbour
// springs: H = sum p_i^2/2 + (k/2) sum (q_{i+1} - q_i)^2, q_0 = q_{n+1} = 0.
// Observables: mode_q_J / mode_p_J, the J-th sine-mode amplitude of q or p.
inline PhaseSystem make_harmonic_chain(int n, double k, const std::vector<std::string>& obs_names) {
    detail::check_dof(n);
    if (k <= 0) throw ConfigError("harmonic-chain: k must be positive");
    PhaseSystem sys;
    sys.n = n;
    sys.name = "harmonic-chain";
    MatrixXd kq = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        kq(i, i) = 2 * k;
        if (i + 1 < n) {
            kq(i, i + 1) = -k;
            kq(i + 1, i) = -k;
        }
    }
    sys.hamiltonian = [kq, n](const VectorXd& z) {
        const auto q = z.head(n);
        const auto p = z.tail(n);
        return 0.5 * p.squaredNorm() + 0.5 * q.dot(kq * q);
    };
    sys.grad_h = [kq, n](const VectorXd& z) {
        VectorXd g(2 * n);
        g.head(n) = kq * z.head(n);
        g.tail(n) = z.tail(n);
        return g;
    };
    MatrixXd rows(static_cast<Eigen::Index>(obs_names.size()), 2 * n);
    rows.setZero();
    for (std::size_t i = 0; i < obs_names.size(); ++i) {
        const std::string& nm = obs_names[i];
        bool is_q = nm.rfind("mode_q_", 0) == 0;
        bool is_p = nm.rfind("mode_p_", 0) == 0;
        if (!is_q && !is_p) throw ConfigError("harmonic-chain: unknown observable '" + nm + "'");
        const int j = std::stoi(nm.substr(7));
        if (j < 1 || j > n) throw ConfigError("harmonic-chain: mode index out of range in '" + nm + "'");
        VectorXd row = VectorXd::Zero(2 * n);
        if (is_q)
            row.head(n) = detail::chain_mode(n, j);
        else
            row.tail(n) = detail::chain_mode(n, j);
        sys.observables.push_back(detail::linear_observable(nm, row));
        rows.row(static_cast<Eigen::Index>(i)) = row;
    }
    sys.gaussian = GaussianInfo{kq, rows, VectorXd::Zero(rows.rows())};
    return sys;
}

// Anharmonic chain: nearest-neighbour springs plus a quartic term,
// V = sum_bonds [ k r^2/2 + quartic r^4/4 ], fixed ends. Observables as in
// harmonic-chain; the quartic coupling feeds energy between modes.
inline PhaseSystem make_fpu_beta(int n, double k, double quartic,
                                 const std::vector<std::string>& obs_names) {
    detail::check_dof(n);
    if (k <= 0 || quartic < 0) throw ConfigError("fpu-beta: need k > 0 and quartic >= 0");
    PhaseSystem sys;
    sys.n = n;
    sys.name = "fpu-beta";
    sys.hamiltonian = [n, k, quartic](const VectorXd& z) {
        const auto q = z.head(n);
        double v = 0.0;
        double prev = 0.0;  // q_0 = 0
        for (int i = 0; i <= n; ++i) {
            const double qi = (i < n) ? q[i] : 0.0;  // q_{n+1} = 0
            const double r = qi - prev;
            const double r2 = r * r;
            v += 0.5 * k * r2 + 0.25 * quartic * r2 * r2;
            prev = qi;
        }
        return 0.5 * z.tail(n).squaredNorm() + v;
    };
    sys.grad_h = [n, k, quartic](const VectorXd& z) {
        const auto q = z.head(n);
        VectorXd g = VectorXd::Zero(2 * n);
        double prev = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double qi = (i < n) ? q[i] : 0.0;
            const double r = qi - prev;
            const double force = k * r + quartic * r * r * r;  // dV/dr for this bond
            if (i < n) g[i] += force;
            if (i > 0) g[i - 1] -= force;
            prev = qi;
        }
        g.tail(n) = z.tail(n);
        return g;
    };
    for (const std::string& nm : obs_names) {
        bool is_q = nm.rfind("mode_q_", 0) == 0;
        bool is_p = nm.rfind("mode_p_", 0) == 0;
        if (!is_q && !is_p) throw ConfigError("fpu-beta: unknown observable '" + nm + "'");
        const int j = std::stoi(nm.substr(7));
        if (j < 1 || j > n) throw ConfigError("fpu-beta: mode index out of range in '" + nm + "'");
        VectorXd row = VectorXd::Zero(2 * n);
        if (is_q)
            row.head(n) = detail::chain_mode(n, j);
        else
            row.tail(n) = detail::chain_mode(n, j);
        sys.observables.push_back(detail::linear_observable(nm, row));
    }
    return sys;
}

// One distinguished oscillator (Q, P) coupled to n-1 bath oscillators through
// a stable quartic term g Q^2 sum_j c_j q_j^2. Observables: Q, P, Q2.
// Layout: q = (Q, q_1..q_{n-1}), p = (P, p_1..p_{n-1}).
inline PhaseSystem make_resolved_bath(int n, double omega0, double coupling,
                                      const std::vector<std::string>& obs_names) {
    detail::check_dof(n);
    if (n < 2) throw ConfigError("resolved-bath: need n >= 2");
    if (coupling < 0) throw ConfigError("resolved-bath: coupling must be >= 0");
    PhaseSystem sys;
    sys.n = n;
    sys.name = "resolved-bath";
    VectorXd omega2(n - 1), c(n - 1);
    for (int j = 0; j < n - 1; ++j) {
        // bath frequencies spread over [1, 2]
        const double w = 1.0 + (n > 2 ? static_cast<double>(j) / (n - 2) : 0.0);
        omega2[j] = w * w;
        c[j] = 1.0 / (n - 1);
    }
    const double w02 = omega0 * omega0;
    sys.hamiltonian = [n, w02, coupling, omega2, c](const VectorXd& z) {
        const auto q = z.head(n);
        const auto p = z.tail(n);
        const double Q = q[0];
        double v = 0.5 * w02 * Q * Q;
        double bath = 0.0;
        for (int j = 1; j < n; ++j) {
            v += 0.5 * omega2[j - 1] * q[j] * q[j];
            bath += c[j - 1] * q[j] * q[j];
        }
        return 0.5 * p.squaredNorm() + v + coupling * Q * Q * bath;
    };
    sys.grad_h = [n, w02, coupling, omega2, c](const VectorXd& z) {
        const auto q = z.head(n);
        VectorXd g(2 * n);
        const double Q = q[0];
        double bath = 0.0;
        for (int j = 1; j < n; ++j) bath += c[j - 1] * q[j] * q[j];
        g[0] = w02 * Q + 2.0 * coupling * Q * bath;
        for (int j = 1; j < n; ++j) g[j] = omega2[j - 1] * q[j] + 2.0 * coupling * Q * Q * c[j - 1] * q[j];
        g.tail(n) = z.tail(n);
        return g;
    };
    for (const std::string& nm : obs_names) {
        if (nm == "Q") {
            VectorXd row = VectorXd::Zero(2 * n);
            row[0] = 1;
            sys.observables.push_back(detail::linear_observable("Q", row));
        } else if (nm == "P") {
            VectorXd row = VectorXd::Zero(2 * n);
            row[n] = 1;
            sys.observables.push_back(detail::linear_observable("P", row));
        } else if (nm == "Q2") {
            sys.observables.push_back({"Q2", [](const VectorXd& z) { return z[0] * z[0]; },
                                       [](const VectorXd& z) {
                                           VectorXd g = VectorXd::Zero(z.size());
                                           g[0] = 2 * z[0];
                                           return g;
                                       }});
        } else {
            throw ConfigError("resolved-bath: unknown observable '" + nm + "'");
        }
    }
    return sys;
}

// Name + parameter-map dispatch used by the CLI.
inline PhaseSystem make_system(const std::string& name, const std::map<std::string, double>& params,
                               const std::vector<std::string>& obs_names) {
    auto get = [&params](const std::string& key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (name == "harmonic-1") return make_harmonic_1(get("k", 1.0), obs_names);
    if (name == "harmonic-chain")
        return make_harmonic_chain(static_cast<int>(get("n", 8)), get("k", 1.0), obs_names);
    if (name == "fpu-beta")
        return make_fpu_beta(static_cast<int>(get("n", 16)), get("k", 1.0), get("quartic", 1.0),
                             obs_names);
    if (name == "resolved-bath")
        return make_resolved_bath(static_cast<int>(get("n", 8)), get("omega0", 1.0),
                                  get("coupling", 0.25), obs_names);
    throw ConfigError("unknown system '" + name + "'");
}

}  // namespace bestfit
