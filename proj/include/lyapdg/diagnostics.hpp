#pragma once

// Run diagnostics: quadrature-weighted error norms, the discrete Lyapunov
// functional, the per-step balance ledger series with CSV emission, and the
// convergence-rate and equilibrium-approach reductions built on top.

#include <optional>
#include <string>
#include <vector>

#include "lyapdg/mesh.hpp"
#include "lyapdg/model.hpp"
#include "lyapdg/rhs.hpp"
#include "lyapdg/sbp.hpp"

namespace lyapdg {

// Volume-normalized norms, one entry per solution component plus totals.
// Normalization makes a constant error field c report (|c|, |c|, |c|).
struct ErrorNorms {
    std::vector<double> l1, l2, linf;
    double l1_total = 0.0;  // sum over components
    double l2_total = 0.0;  // root of summed squares
    double linf_total = 0.0;
};

// Quadrature-weighted norms of u - u_ref over the whole mesh.
ErrorNorms error_norms(const TensorOperatorSet& ops, const MetricData& metrics,
                       const std::vector<double>& u, const std::vector<double>& u_ref);

// MJ-weighted sum of the model's pointwise convex functional. Nonnegative,
// zero only at the discrete equilibrium state. Throws AdmissibilityError
// (with element/node location) when u leaves the admissible set.
double lyapunov_functional(const TensorOperatorSet& ops, const MetricData& metrics,
                           const ModelContract& model, const std::vector<double>& u);

// One sampled row of the balance ledger. dist holds the nodal max-norm
// distance to equilibrium per component.
struct BalanceRow {
    double t = 0.0;
    double V = 0.0;
    double dVdt = 0.0;
    double Xi = 0.0;
    double DT = 0.0;
    double forcing = 0.0;
    double residual = 0.0;
    double gamma = 1.0;
    double dt = 0.0;
    std::vector<double> dist;
};

struct BalanceSeries {
    std::vector<std::string> component_names; // labels the dist_* CSV columns
    std::vector<BalanceRow> rows;
};

// Assembles a ledger row from one RHS evaluation at (t, u). gamma and dt
// describe the step that produced u (1 and 0 for the initial sample).
BalanceRow balance_sample(double t, const LyapunovBalanceTerms& terms, double gamma,
                          double dt, const TensorOperatorSet& ops,
                          const MetricData& metrics, const ModelContract& model,
                          const std::vector<double>& u);

// CSV with header t,V,dVdt,Xi,DT,forcing,residual,gamma,dt,dist_<name>...
// Floats carry 17 significant digits so reruns can be compared bitwise.
std::string balance_series_csv(const BalanceSeries& series);
void write_balance_series_csv(const BalanceSeries& series, const std::string& path);

// rate_k = log(e_k / e_{k+1}) / log(h_k / h_{k+1}). A vanishing or negative
// error level makes the rate undefined; those entries come back as NaN.
std::vector<double> convergence_rates(const std::vector<double>& h,
                                      const std::vector<double>& err);

// First time the max-over-components equilibrium distance drops to the
// threshold, linearly interpolated between the bracketing samples. Empty
// when the series never reaches it.
std::optional<double> equilibrium_tracking(const BalanceSeries& series,
                                           double threshold);

} // namespace lyapdg
