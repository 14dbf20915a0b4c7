// File formats: trajectory CSV/JSON, coefficient-matrix JSON/CSV, the binary
// columnar ensemble-sample format, and validation reports. The empirical
// ensemble series shares the trajectory schema (regime "ensemble") so closure
// and simulation outputs diff directly; fields the ensemble does not measure
// are written as nan.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "bestfit/closure.hpp"
#include "bestfit/ensemble.hpp"
#include "bestfit/errors.hpp"
#include "bestfit/moments.hpp"
#include "bestfit/riccati.hpp"
#include "bestfit/stat_model.hpp"

namespace bestfit {

using nlohmann::json;

namespace io {

inline json matrix_to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json vector_to_json(const VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline void write_text(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    f << body;
    if (!f) throw ConfigError("write failed for '" + path + "'");
}

inline std::string csv_number(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

}  // namespace io

// ------------------------------- trajectories -------------------------------

inline std::string trajectory_csv(const ReducedTrajectory& traj) {
    const int m = traj.lambda_path.empty() ? 0 : static_cast<int>(traj.lambda_path[0].size());
    std::ostringstream os;
    os << "t";
    for (int i = 0; i < m; ++i) os << ",lambda_" << i;
    for (int i = 0; i < m; ++i) os << ",a_" << i;
    for (int i = 0; i < m; ++i) os << ",mu_" << i;
    os << ",s,dsdt\n";
    for (int k = 0; k < traj.size(); ++k) {
        os << io::csv_number(traj.times[k]);
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(traj.lambda_path[k][i]);
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(traj.a_path[k][i]);
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(traj.flux_path[k][i]);
        os << ',' << io::csv_number(traj.entropy_path[k]) << ','
           << io::csv_number(traj.production_path[k]) << '\n';
    }
    return os.str();
}

inline json trajectory_json(const ReducedTrajectory& traj, const json& metadata = json::object()) {
    json out;
    out["regime"] = regime_name(traj.regime);
    out["t_char"] = traj.t_char;
    out["convexity_warning"] = traj.convexity_warning;
    out["times"] = traj.times;
    json l = json::array(), a = json::array(), mu = json::array();
    for (int k = 0; k < traj.size(); ++k) {
        l.push_back(io::vector_to_json(traj.lambda_path[k]));
        a.push_back(io::vector_to_json(traj.a_path[k]));
        mu.push_back(io::vector_to_json(traj.flux_path[k]));
    }
    out["lambda"] = std::move(l);
    out["a"] = std::move(a);
    out["mu"] = std::move(mu);
    out["s"] = traj.entropy_path;
    out["dsdt"] = traj.production_path;
    out["metadata"] = metadata;
    return out;
}

inline std::string empirical_csv(const EmpiricalSeries& emp) {
    const int m = static_cast<int>(emp.a_mean.rows());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::ostringstream os;
    os << "t";
    for (int i = 0; i < m; ++i) os << ",lambda_" << i;
    for (int i = 0; i < m; ++i) os << ",a_" << i;
    for (int i = 0; i < m; ++i) os << ",mu_" << i;
    os << ",s,dsdt";
    for (int i = 0; i < m; ++i) os << ",a_se_" << i;
    os << '\n';
    for (int k = 0; k < emp.size(); ++k) {
        os << io::csv_number(emp.times[k]);
        for (int i = 0; i < 2 * m; ++i) {
            if (i < m)
                os << ',' << io::csv_number(nan);  // lambda not measured
            else
                os << ',' << io::csv_number(emp.a_mean(i - m, k));
        }
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(nan);  // mu
        os << ',' << io::csv_number(nan) << ',' << io::csv_number(nan);
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(emp.a_se(i, k));
        os << '\n';
    }
    return os.str();
}

inline json empirical_json(const EmpiricalSeries& emp, const json& metadata = json::object()) {
    json out;
    out["regime"] = "ensemble";
    out["times"] = emp.times;
    out["a"] = io::matrix_to_json(emp.a_mean);
    out["a_se"] = io::matrix_to_json(emp.a_se);
    out["h"] = io::vector_to_json(emp.h_mean);
    out["h_se"] = io::vector_to_json(emp.h_se);
    out["dropped"] = emp.dropped;
    out["total"] = emp.total;
    out["metadata"] = metadata;
    return out;
}

// ------------------------------- coefficients -------------------------------

inline json matrices_json(const ModelMatrices& mm, long long sample_count, std::uint64_t seed) {
    json out;
    out["lambda"] = io::vector_to_json(mm.lambda);
    out["N"] = sample_count;
    out["seed"] = seed;
    out["C"] = io::matrix_to_json(mm.c);
    out["C_se"] = io::matrix_to_json(mm.c_se);
    out["f"] = io::vector_to_json(mm.f);
    out["f_se"] = io::vector_to_json(mm.f_se);
    out["f_alternative"] = io::vector_to_json(mm.f_alternative);
    out["f_discrepancy"] = mm.f_discrepancy;
    out["Omega"] = io::matrix_to_json(mm.omega);
    out["Omega_se"] = io::matrix_to_json(mm.omega_se);
    out["Omega_raw_asymmetry"] = mm.omega_raw_asymmetry;
    out["D"] = io::matrix_to_json(mm.d);
    out["D_se"] = io::matrix_to_json(mm.d_se);
    return out;
}

inline json equilibrium_json(const EquilibriumConstants& eqc, long long sample_count,
                             std::uint64_t seed) {
    json out;
    out["N"] = sample_count;
    out["seed"] = seed;
    out["C0"] = io::matrix_to_json(eqc.c0);
    out["C0_se"] = io::matrix_to_json(eqc.c0_se);
    out["Jrev"] = io::matrix_to_json(eqc.jrev);
    out["Jrev_se"] = io::matrix_to_json(eqc.jrev_se);
    out["Jrev_raw_asymmetry"] = eqc.jrev_raw_asymmetry;
    out["D0"] = io::matrix_to_json(eqc.d0);
    out["D0_se"] = io::matrix_to_json(eqc.d0_se);
    return out;
}

inline std::string matrices_csv(const ModelMatrices& mm) {
    std::ostringstream os;
    os << "name,row,col,value,se\n";
    auto emit = [&os](const std::string& name, const MatrixXd& v, const MatrixXd& se) {
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j)
                os << name << ',' << i << ',' << j << ',' << io::csv_number(v(i, j)) << ','
                   << io::csv_number(se(i, j)) << '\n';
    };
    emit("C", mm.c, mm.c_se);
    emit("f", mm.f, mm.f_se);
    emit("Omega", mm.omega, mm.omega_se);
    emit("D", mm.d, mm.d_se);
    return os.str();
}

inline std::string riccati_csv(const RiccatiTrajectory& traj) {
    const Eigen::Index m = traj.values.empty() ? 0 : traj.values.front().rows();
    std::ostringstream os;
    os << "t";
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) os << ",M_" << i << '_' << j;
    os << '\n';
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        os << io::csv_number(traj.times[k]);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) os << ',' << io::csv_number(traj.values[k](i, j));
        os << '\n';
    }
    return os.str();
}

inline json validation_json(const ValidationReport& rep) {
    json out;
    out["times"] = rep.times;
    out["empirical_a"] = io::matrix_to_json(rep.empirical_a);
    out["empirical_se"] = io::matrix_to_json(rep.empirical_se);
    out["closure_a"] = io::matrix_to_json(rep.closure_a);
    out["z_scores"] = io::matrix_to_json(rep.z_scores);
    out["max_z_score"] = rep.max_z_score;
    out["plateau_value"] = rep.plateau_value;
    out["plateau_value_se"] = rep.plateau_value_se;
    out["plateau_slope"] = rep.plateau_slope;
    out["mean_energy_drift"] = rep.mean_energy_drift;
    out["dropped"] = rep.dropped;
    out["total"] = rep.total;
    return out;
}

// ----------------------------- sample binary format --------------------------

// Layout: magic "BFSMPL01", u32 dim, u64 count, u64 seed, u32 kind length +
// bytes, u64 burn_in, u64 thinning, f64 acceptance, u8 flagged, u8 uniform
// weights, then optionally count f64 weights, then count*dim f64 coordinates,
// one point after another. Little-endian throughout.
inline void write_sample(const std::string& path, const EnsembleSample& sample) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    auto put = [&f](const void* p, std::size_t n) {
        f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    };
    f.write("BFSMPL01", 8);
    const std::uint32_t dim = static_cast<std::uint32_t>(sample.points.rows());
    const std::uint64_t count = static_cast<std::uint64_t>(sample.points.cols());
    put(&dim, 4);
    put(&count, 8);
    put(&sample.provenance.seed, 8);
    const std::uint32_t klen = static_cast<std::uint32_t>(sample.provenance.kind.size());
    put(&klen, 4);
    put(sample.provenance.kind.data(), klen);
    const std::uint64_t burn = sample.provenance.burn_in, thin = sample.provenance.thinning;
    put(&burn, 8);
    put(&thin, 8);
    put(&sample.provenance.acceptance_rate, 8);
    const std::uint8_t flagged = sample.provenance.flagged ? 1 : 0;
    put(&flagged, 1);
    const bool uniform = (sample.weights.array() == sample.weights[0]).all();
    const std::uint8_t uw = uniform ? 1 : 0;
    put(&uw, 1);
    if (!uniform) put(sample.weights.data(), 8 * count);
    for (std::uint64_t j = 0; j < count; ++j) put(sample.points.col(j).data(), 8 * dim);
    if (!f) throw ConfigError("write failed for '" + path + "'");
}

inline EnsembleSample read_sample(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    auto get = [&f, &path](void* p, std::size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!f) throw ConfigError("truncated sample file '" + path + "'");
    };
    char magic[8];
    get(magic, 8);
    if (std::memcmp(magic, "BFSMPL01", 8) != 0) {
        throw ConfigError("'" + path + "' is not a sample file");
    }
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    get(&dim, 4);
    get(&count, 8);
    EnsembleSample out;
    get(&out.provenance.seed, 8);
    std::uint32_t klen = 0;
    get(&klen, 4);
    out.provenance.kind.resize(klen);
    if (klen) get(out.provenance.kind.data(), klen);
    std::uint64_t burn = 0, thin = 0;
    get(&burn, 8);
    get(&thin, 8);
    out.provenance.burn_in = static_cast<int>(burn);
    out.provenance.thinning = static_cast<int>(thin);
    get(&out.provenance.acceptance_rate, 8);
    std::uint8_t flagged = 0, uw = 1;
    get(&flagged, 1);
    get(&uw, 1);
    out.provenance.flagged = flagged != 0;
    out.weights.resize(static_cast<Eigen::Index>(count));
    if (uw == 0) {
        get(out.weights.data(), 8 * count);
    } else {
        out.weights.setConstant(count > 0 ? 1.0 / count : 0.0);
    }
    out.points.resize(dim, static_cast<Eigen::Index>(count));
    for (std::uint64_t j = 0; j < count; ++j) {
        get(out.points.col(static_cast<Eigen::Index>(j)).data(), 8 * dim);
    }
    return out;
}

// Macrostate summary CSV, one row per state.
inline std::string macrostates_csv(const std::vector<ThermoState>& states) {
    std::ostringstream os;
    const int m = states.empty() ? 0 : static_cast<int>(states.front().a.size());
    os << "beta,u,s";
    for (int i = 0; i < m; ++i) os << ",lambda_" << i;
    for (int i = 0; i < m; ++i) os << ",a_" << i;
    os << '\n';
    for (const auto& st : states) {
        os << io::csv_number(st.beta) << ',' << io::csv_number(st.u) << ','
           << (st.s ? io::csv_number(*st.s) : "nan");
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(st.lambda[i]);
        for (int i = 0; i < m; ++i) os << ',' << io::csv_number(st.a[i]);
        os << '\n';
    }
    return os.str();
}

}  // namespace bestfit
