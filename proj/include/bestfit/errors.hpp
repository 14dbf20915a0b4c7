// Exception hierarchy shared by all modules. The CLI maps these to exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace bestfit {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration or schema violation (CLI exit code 2).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Sampling failures: divergent chains, degenerate models, excessive
// trajectory drops (CLI exit code 3).
struct SamplingError : Error {
    explicit SamplingError(const std::string& msg) : Error(msg) {}
};

// Numerical solver failures: Riccati, shooting, step instability
// (CLI exit code 4).
struct SolverError : Error {
    explicit SolverError(const std::string& msg) : Error(msg) {}
};

// Validation failures: grid mismatch, threshold exceeded (CLI exit code 5).
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

}  // namespace bestfit
