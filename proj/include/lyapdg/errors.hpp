#pragma once

// Exception taxonomy shared by all modules. Every throw site uses one of
// these so callers can tell configuration mistakes apart from runtime
// failures (inadmissible states, geometry breakdown, integrator stalls).

#include <stdexcept>
#include <string>

namespace lyapdg {

// Bad user input: parameter out of range, malformed file, missing field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Mesh/mapping failure, e.g. nonpositive metric Jacobian.
class GeometryError : public std::runtime_error {
public:
    GeometryError(const std::string& what, int element, int node)
        : std::runtime_error(what), element(element), node(node) {}
    int element = -1;
    int node = -1;
};

// State left the admissible set (P <= 0 or Q <= 0). Carries the location
// when the caller knows it; -1 means "detected outside the mesh context".
// Never clipped or repaired: silent clipping would corrupt the Lyapunov
// accounting, so the step is rejected instead.
class AdmissibilityError : public std::runtime_error {
public:
    AdmissibilityError(const std::string& what, int element = -1, int node = -1)
        : std::runtime_error(what), element(element), node(node) {}
    int element = -1;
    int node = -1;
};

// Relaxation root solve found no admissible bracket; the step is rejected.
class RelaxationError : public std::runtime_error {
public:
    explicit RelaxationError(const std::string& what) : std::runtime_error(what) {}
};

// Time integration cannot continue (step size underflow after rejections).
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double t, double dt)
        : std::runtime_error(what), t(t), dt(dt) {}
    double t = 0.0;
    double dt = 0.0;
};

// API misuse that is a programming error at the call site (layout mismatch).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace lyapdg
