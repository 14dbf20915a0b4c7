// Declarative run configuration: one JSON document drives the whole pipeline.
// The schema is strict: unknown keys are rejected, and emit-then-parse
// round-trips to an identical document.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bestfit/errors.hpp"

namespace bestfit {

using nlohmann::json;

struct RunConfig {
    struct System {
        std::string name;
        std::map<std::string, double> params;
    };
    struct Model {
        std::string variant;  // "fixed-beta" or "fixed-energy"
        double beta = 1.0;
        double energy = 0.0;
        std::vector<double> lambda0;
    };
    struct Sampling {
        long long count = 10000;
        std::uint64_t seed = 1;
        int burn_in = 10000;
        int thinning = 10;
    };
    struct Run {
        std::vector<std::string> regimes;
        double horizon = 10.0;
        double dt = 1e-3;
        double micro_dt = 1e-3;
        int stride = 0;  // 0 = auto (about 200 stored points)
        std::string output_dir = "out";
    };
    struct Validation {
        double z_threshold = 5.0;
    };

    System system;
    Model model;
    std::vector<std::string> observables;
    std::vector<double> weights;  // scalar configs are broadcast at use site
    bool weights_scalar = true;
    Sampling sampling;
    Run run;
    Validation validation;
};

namespace detail {

inline void require_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("config: unknown key '" + where + "." + it.key() + "'");
        }
    }
}

inline const json& require(const json& j, const std::string& where, const std::string& key) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError("config: missing required field '" + where + "." + key + "'");
    return *it;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    detail::require_keys(j, "", {"system", "model", "observables", "weights", "sampling", "run",
                                 "validation"});
    RunConfig cfg;

    const json& sys = detail::require(j, "", "system");
    detail::require_keys(sys, "system", {"name", "params"});
    cfg.system.name = detail::require(sys, "system", "name").get<std::string>();
    if (sys.contains("params")) {
        if (!sys["params"].is_object()) throw ConfigError("config: system.params must be an object");
        for (auto it = sys["params"].begin(); it != sys["params"].end(); ++it) {
            if (!it.value().is_number()) {
                throw ConfigError("config: system.params." + it.key() + " must be a number");
            }
            cfg.system.params[it.key()] = it.value().get<double>();
        }
    }

    const json& model = detail::require(j, "", "model");
    detail::require_keys(model, "model", {"variant", "beta", "energy", "lambda0"});
    cfg.model.variant = detail::require(model, "model", "variant").get<std::string>();
    if (cfg.model.variant == "fixed-beta") {
        cfg.model.beta = detail::require(model, "model", "beta").get<double>();
    } else if (cfg.model.variant == "fixed-energy") {
        cfg.model.energy = detail::require(model, "model", "energy").get<double>();
    } else {
        throw ConfigError("config: model.variant must be 'fixed-beta' or 'fixed-energy'");
    }
    for (const auto& v : detail::require(model, "model", "lambda0")) {
        cfg.model.lambda0.push_back(v.get<double>());
    }

    for (const auto& v : detail::require(j, "", "observables")) {
        cfg.observables.push_back(v.get<std::string>());
    }
    if (cfg.observables.empty()) throw ConfigError("config: observables must be non-empty");
    if (cfg.model.lambda0.size() != cfg.observables.size()) {
        throw ConfigError("config: model.lambda0 length must match observables");
    }

    const json& w = detail::require(j, "", "weights");
    if (w.is_number()) {
        cfg.weights_scalar = true;
        cfg.weights.assign(cfg.observables.size(), w.get<double>());
    } else if (w.is_array()) {
        cfg.weights_scalar = false;
        for (const auto& v : w) cfg.weights.push_back(v.get<double>());
        if (cfg.weights.size() != cfg.observables.size()) {
            throw ConfigError("config: weights list length must match observables");
        }
    } else {
        throw ConfigError("config: weights must be a number or a list");
    }
    for (double v : cfg.weights) {
        if (v < 0) throw ConfigError("config: weights must be >= 0");
    }

    const json& sampling = detail::require(j, "", "sampling");
    detail::require_keys(sampling, "sampling", {"N", "seed", "burn_in", "thinning"});
    cfg.sampling.count = detail::require(sampling, "sampling", "N").get<long long>();
    cfg.sampling.seed = detail::require(sampling, "sampling", "seed").get<std::uint64_t>();
    if (sampling.contains("burn_in")) cfg.sampling.burn_in = sampling["burn_in"].get<int>();
    if (sampling.contains("thinning")) cfg.sampling.thinning = sampling["thinning"].get<int>();

    const json& run = detail::require(j, "", "run");
    detail::require_keys(run, "run",
                         {"regimes", "T", "dt", "micro_dt", "stride", "output_dir"});
    for (const auto& v : detail::require(run, "run", "regimes")) {
        const std::string r = v.get<std::string>();
        static const std::set<std::string> known{"adiabatic", "linear-stationary",
                                                 "linear-nonstationary", "nonlinear-stationary",
                                                 "ensemble"};
        if (!known.count(r)) throw ConfigError("config: unknown regime '" + r + "'");
        cfg.run.regimes.push_back(r);
    }
    cfg.run.horizon = detail::require(run, "run", "T").get<double>();
    cfg.run.dt = detail::require(run, "run", "dt").get<double>();
    if (run.contains("micro_dt")) cfg.run.micro_dt = run["micro_dt"].get<double>();
    if (run.contains("stride")) cfg.run.stride = run["stride"].get<int>();
    if (run.contains("output_dir")) cfg.run.output_dir = run["output_dir"].get<std::string>();
    if (cfg.run.horizon <= 0 || cfg.run.dt <= 0 || cfg.run.micro_dt <= 0) {
        throw ConfigError("config: run.T, run.dt and run.micro_dt must be positive");
    }

    if (j.contains("validation")) {
        detail::require_keys(j["validation"], "validation", {"z_threshold"});
        if (j["validation"].contains("z_threshold")) {
            cfg.validation.z_threshold = j["validation"]["z_threshold"].get<double>();
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in '" + path + "': " + e.what());
    }
    return parse_config(j);
}

inline json emit_config(const RunConfig& cfg) {
    json j;
    j["system"]["name"] = cfg.system.name;
    j["system"]["params"] = json::object();
    for (const auto& [k, v] : cfg.system.params) j["system"]["params"][k] = v;
    j["model"]["variant"] = cfg.model.variant;
    if (cfg.model.variant == "fixed-beta") j["model"]["beta"] = cfg.model.beta;
    if (cfg.model.variant == "fixed-energy") j["model"]["energy"] = cfg.model.energy;
    j["model"]["lambda0"] = cfg.model.lambda0;
    j["observables"] = cfg.observables;
    if (cfg.weights_scalar) {
        j["weights"] = cfg.weights.empty() ? 0.0 : cfg.weights.front();
    } else {
        j["weights"] = cfg.weights;
    }
    j["sampling"]["N"] = cfg.sampling.count;
    j["sampling"]["seed"] = cfg.sampling.seed;
    j["sampling"]["burn_in"] = cfg.sampling.burn_in;
    j["sampling"]["thinning"] = cfg.sampling.thinning;
    j["run"]["regimes"] = cfg.run.regimes;
    j["run"]["T"] = cfg.run.horizon;
    j["run"]["dt"] = cfg.run.dt;
    j["run"]["micro_dt"] = cfg.run.micro_dt;
    j["run"]["stride"] = cfg.run.stride;
    j["run"]["output_dir"] = cfg.run.output_dir;
    j["validation"]["z_threshold"] = cfg.validation.z_threshold;
    return j;
}

}  // namespace bestfit
