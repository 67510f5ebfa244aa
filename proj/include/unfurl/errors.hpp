#pragma once

#include <stdexcept>
#include <string>

namespace unfurl {

// Error taxonomy shared by all modules. Each failure mode gets its own type
// so callers (and the CLI exit-code mapping) can tell them apart.

struct DegenerateInput : std::runtime_error {
    explicit DegenerateInput(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyInput : std::runtime_error {
    explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyGoalSet : std::runtime_error {
    explicit EmptyGoalSet(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroBaseline : std::runtime_error {
    explicit ZeroBaseline(const std::string& what) : std::runtime_error(what) {}
};

struct BadCorrespondence : std::runtime_error {
    explicit BadCorrespondence(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures carry the step index where they were detected.
struct NumericalBlowup : std::runtime_error {
    explicit NumericalBlowup(const std::string& what, long step = -1)
        : std::runtime_error(what), step(step) {}
    long step;
};

struct NonFinite : std::runtime_error {
    explicit NonFinite(const std::string& what, long step = -1)
        : std::runtime_error(what), step(step) {}
    long step;
};

struct NonConvergence : std::runtime_error {
    explicit NonConvergence(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace unfurl
