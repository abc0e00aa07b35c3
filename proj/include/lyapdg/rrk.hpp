#pragma once

// Explicit Runge-Kutta integration with per-step relaxation: after the
// stages, the update direction is rescaled by the root gamma of
// q(gamma) = V(u + gamma dt d) - V(u) - gamma e, so the convex functional V
// changes exactly by the dissipative estimate e accumulated from the stages.
// Includes a tableau library with an order-condition checker, an embedded
// PI step controller, and fixed/adaptive driver loops.

#include <functional>
#include <string>
#include <vector>

namespace lyapdg {

struct ButcherTableau {
    std::string name;
    int stages = 0;
    std::vector<double> a;      // stages*stages row-major, strictly lower triangular
    std::vector<double> b;      // quadrature weights, sum 1
    std::vector<double> c;      // abscissae, c_i = sum_j a_ij
    std::vector<double> b_hat;  // embedded weights; empty when the pair has none
    int order = 0;
    int embedded_order = 0;

    double A(int i, int j) const { return a[i * stages + j]; }
    bool has_embedded() const { return !b_hat.empty(); }
};

// Shipped methods: "heun" 2(1), "bs3" Bogacki-Shampine 3(2), "rk4" classical
// order 4 (no embedded weights), "bs5" Bogacki-Shampine 5(4).
ButcherTableau tableau_library(const std::string& name);

// JSON file with fields stages, A (row-major or nested rows), b, c, order,
// and optional b_hat, embedded_order, name. Validated on load.
ButcherTableau load_tableau(const std::string& path);

// Structural checks: shapes, explicitness, sum(b) = 1, row sums matching c
// to 1e-14. With for_relaxation, negative b weights are rejected since the
// dissipation guarantee needs b_i >= 0. Throws ConfigError.
void validate_tableau(const ButcherTableau& tab, bool for_relaxation);

// Max residual of the rooted-tree order conditions for the given weight
// vector (pass tab.b or tab.b_hat) up to `order` (supported through 5).
double order_condition_residual(const ButcherTableau& tab,
                                const std::vector<double>& weights, int order);

// Right-hand side closure. rhs writes dy/dt and returns the inner product
// <W(y), f> in whatever weighted pairing differentiates the functional, so
// the relaxation estimate e comes from the stage evaluations themselves.
// functional is the convex quantity V preserved/dissipated by relaxation.
struct OdeSystem {
    int dim = 0;
    std::function<double(double t, const std::vector<double>& y, std::vector<double>& dydt)> rhs;
    std::function<double(const std::vector<double>& y)> functional;
};

struct RelaxationStep {
    double gamma = 1.0;
    double e = 0.0;          // estimated functional change over the step
    double q_residual = 0.0; // |q| at the accepted root
    int iterations = 0;
    bool fallback = false;   // near-equilibrium shortcut gamma = 1 engaged
};

// Root solve for gamma with u_new = un + gamma*dt*d. Brackets around 1
// (expanding within [1e-3, 10]) and polishes with a safeguarded secant to
// |q| <= 1e-12 max(1, |V(un)|). Near equilibrium (dt*d negligibly small
// against un) returns gamma = 1 directly, where q vanishes identically.
// Throws RelaxationError when no admissible positive bracket exists.
RelaxationStep solve_gamma(const OdeSystem& sys, const std::vector<double>& un,
                           const std::vector<double>& d, double e, double dt,
                           double v_old);

// One-step engine with preallocated stage storage. Splitting the step into
// compute_stages / relax / commit lets the drivers reject on the embedded
// error estimate before paying for the root solve.
class RrkStepper {
public:
    RrkStepper(const OdeSystem& sys, const ButcherTableau& tab, bool relaxation);

    // Evaluates all stage slopes at (t, u), the update direction d, the
    // estimate e, and the unrelaxed update. Admissibility errors from the
    // stage evaluations propagate (the drivers treat them as rejections).
    void compute_stages(double t, double dt, const std::vector<double>& u);
    // Weighted RMS embedded error estimate of the last compute_stages call;
    // <= 1 means the step passes the tolerances.
    double error_estimate(const std::vector<double>& u, double atol, double rtol) const;
    // Relaxation root for the last compute_stages call (gamma = 1 when
    // relaxation is disabled).
    RelaxationStep relax(const std::vector<double>& u);
    // Applies u += gamma dt d and advances t by gamma dt.
    void commit(double& t, std::vector<double>& u, const RelaxationStep& rel) const;

    // Convenience: stages + relax + commit. Returns the relaxation record.
    RelaxationStep step(double& t, double dt, std::vector<double>& u);

    const std::vector<double>& slope(int i) const { return f_[i]; }
    const std::vector<double>& direction() const { return d_; }
    // un + dt*d, the unrelaxed update of the last compute_stages call.
    const std::vector<double>& base_update() const { return ubase_; }
    const ButcherTableau& tableau() const { return tab_; }
    bool relaxation() const { return relaxation_; }

private:
    const OdeSystem& sys_;
    ButcherTableau tab_;
    bool relaxation_;
    double t_ = 0.0, dt_ = 0.0, e_ = 0.0;
    std::vector<std::vector<double>> f_;
    std::vector<double> inner_;
    std::vector<double> ywork_, d_, ubase_;
};

struct StepController {
    double dt = 0.0;          // initial step; adapted in place by the driver
    double rtol = 1e-6;
    double atol = 1e-8;
    double safety = 0.9;
    double dt_min = 1e-14;
    double dt_max = 1e100;
};

struct IntegrationStats {
    int accepted = 0;
    int rejected_error = 0;
    int rejected_admissibility = 0;
    int relaxation_fallbacks = 0;
    double final_t = 0.0;
    double last_dt = 0.0;
};

// Called after each accepted step with the new time, the base step size
// (the time actually advanced is gamma*dt), the relaxation record, and the
// updated state.
using StepObserver =
    std::function<void(double t, double dt, const RelaxationStep& rel,
                       const std::vector<double>& u)>;

// Fixed nominal step size; the last steps are rescaled by the running gamma
// estimate so the relaxed times land on t_end exactly (snapped at 1e-11).
IntegrationStats fixed_advance(const OdeSystem& sys, const ButcherTableau& tab,
                               double t0, double t_end, double dt,
                               std::vector<double>& u, bool relaxation,
                               const StepObserver& observer = {});

// Embedded-pair PI controller (safety * est^(-0.7/k) * est_prev^(0.4/k),
// k = embedded_order + 1, factor clamped to [0.2, 5]). Error rejections
// shrink by the classical formula, admissibility rejections halve dt, and
// underflow below dt_min raises IntegrationError.
IntegrationStats adaptive_advance(const OdeSystem& sys, const ButcherTableau& tab,
                                  StepController controller, double t0, double t_end,
                                  std::vector<double>& u, bool relaxation,
                                  const StepObserver& observer = {});

} // namespace lyapdg
