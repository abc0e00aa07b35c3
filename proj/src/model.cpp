#include "lyapdg/model.hpp"

#include <cmath>

#include "lyapdg/errors.hpp"

namespace lyapdg {

namespace {
constexpr int max_stack_components = 8;
}

void ModelContract::convective_flux_normal(const double* u, const double* m, int dim,
                                           double* out) const {
    const int r = components();
    if (r > max_stack_components)
        throw UsageError("default flux contraction handles at most 8 components; override it");
    double tmp[max_stack_components];
    for (int c = 0; c < r; ++c) out[c] = 0.0;
    for (int l = 0; l < dim; ++l) {
        convective_flux(u, l, tmp);
        for (int c = 0; c < r; ++c) out[c] += m[l] * tmp[c];
    }
}

void ModelContract::two_point_flux_normal(const double* ua, const double* wa,
                                          const double* ub, const double* wb,
                                          const double* m, int dim, double* out) const {
    (void)wa;
    (void)wb;
    const int r = components();
    if (r > max_stack_components)
        throw UsageError("default flux contraction handles at most 8 components; override it");
    double tmp[max_stack_components];
    for (int c = 0; c < r; ++c) out[c] = 0.0;
    for (int l = 0; l < dim; ++l) {
        two_point_flux(ua, ub, l, tmp);
        for (int c = 0; c < r; ++c) out[c] += m[l] * tmp[c];
    }
}

void ModelContract::viscous_chat_all(const double* u, double t, int dim,
                                     double* out) const {
    const int r = components();
    for (int l = 0; l < dim; ++l)
        for (int m = 0; m < dim; ++m)
            viscous_chat(u, t, l, m, out + (l * dim + m) * r * r);
}

EquilibriumPoint equilibrium_from_mass(double mass, double k_f, double k_r) {
    if (!(mass > 0.0))
        throw ConfigError("equilibrium mass must be positive, got " + std::to_string(mass));
    if (!(k_f > 0.0) || !(k_r > 0.0))
        throw ConfigError("equilibrium_from_mass needs k_f > 0 and k_r > 0");
    EquilibriumPoint eq;
    eq.P = (-k_r + std::sqrt(k_r * (8.0 * k_f * mass + k_r))) / (4.0 * k_f);
    eq.Q = (mass - eq.P) / 2.0;
    return eq;
}

double log_mean_cached(double x, double y, double log_x, double log_y) {
    // ln(x/y) = 2 artanh(f) with f = (x/y - 1)/(x/y + 1); for u = f^2 small
    // the direct quotient cancels, so switch to the artanh series. Truncation
    // after u^3/7 is u^4/9 relative, below 2e-17 at the 1e-4 cutoff.
    const double zeta = x / y;
    const double f = (zeta - 1.0) / (zeta + 1.0);
    const double u = f * f;
    if (u < 1e-4)
        return (x + y) / (2.0 * (1.0 + u * (1.0 / 3.0 + u * (1.0 / 5.0 + u * (1.0 / 7.0)))));
    // Up to a 3:1 ratio the cached log difference still cancels (error grows
    // like eps*|log x|/|log(x/y)|), so recompute the ratio log from scratch;
    // the log1p form keeps the quotient at a few ulps and stays symmetric.
    if (u < 0.25)
        return x >= y ? (x - y) / std::log1p((x - y) / y)
                      : (x - y) / -std::log1p((y - x) / x);
    return (x - y) / (log_x - log_y);
}

double log_mean(double x, double y) {
    if (!(x > 0.0) || !(y > 0.0))
        throw AdmissibilityError("log mean of nonpositive arguments (" +
                                 std::to_string(x) + ", " + std::to_string(y) + ")");
    return log_mean_cached(x, y, std::log(x), std::log(y));
}

DimerizationModel::DimerizationModel(const DimerParams& params, const EquilibriumPoint& eq)
    : params_(params), eq_(eq), eq_state_{eq.P, eq.Q} {
    if (params.k_f < 0.0)
        throw ConfigError("dimerization rate k_f must be >= 0");
    if (!(params.k_r > 0.0))
        throw ConfigError("dissociation rate k_r must be > 0");
    if (params.d < 0.0)
        throw ConfigError("diffusion coefficient d must be >= 0");
    if (!(eq.P > 0.0) || !(eq.Q > 0.0))
        throw ConfigError("equilibrium reference must have P > 0 and Q > 0");
    if (params.k_f > 0.0) {
        // W is taken relative to this state; without detailed balance the
        // reaction dissipativity bound W^T R <= 0 does not hold.
        const double fwd = params.k_f * eq.P * eq.P;
        const double rev = params.k_r * eq.Q;
        if (std::abs(fwd - rev) > 1e-12 * std::max(fwd, rev))
            throw ConfigError("equilibrium reference violates detailed balance k_f P^2 = k_r Q");
    }
}

void DimerizationModel::reaction(const double* u, double t, double* out) const {
    (void)t;
    const double forward = params_.k_f * u[0] * u[0];
    const double reverse = params_.k_r * u[1];
    out[0] = -2.0 * forward + 2.0 * reverse;
    out[1] = forward - reverse;
}

void DimerizationModel::convective_flux(const double* u, int l, double* out) const {
    out[0] = params_.a[l] * u[0];
    out[1] = params_.a[l] * u[1];
}

void DimerizationModel::two_point_flux(const double* ua, const double* ub, int l,
                                       double* out) const {
    for (int c = 0; c < 2; ++c) {
        const double ec = eq_state_[c];
        out[c] = params_.a[l] * ec * log_mean(ua[c] / ec, ub[c] / ec);
    }
}

void DimerizationModel::two_point_flux_normal(const double* ua, const double* wa,
                                              const double* ub, const double* wb,
                                              const double* m, int dim,
                                              double* out) const {
    double s = 0.0;
    for (int l = 0; l < dim; ++l) s += m[l] * params_.a[l];
    // W_c = ln(U_c/U_eq,c) is exactly the log the log-mean needs.
    for (int c = 0; c < 2; ++c) {
        const double ec = eq_state_[c];
        out[c] = s * ec * log_mean_cached(ua[c] / ec, ub[c] / ec, wa[c], wb[c]);
    }
}

double DimerizationModel::lyapunov_V(const double* u) const {
    if (!admissible(u))
        throw AdmissibilityError("Lyapunov function at nonpositive state (P=" +
                                 std::to_string(u[0]) + ", Q=" + std::to_string(u[1]) + ")");
    const double p = u[0], q = u[1];
    return p * std::log(p / eq_.P) - p + eq_.P + q * std::log(q / eq_.Q) - q + eq_.Q;
}

void DimerizationModel::lyapunov_W(const double* u, double* out) const {
    if (!admissible(u))
        throw AdmissibilityError("Lyapunov variables at nonpositive state (P=" +
                                 std::to_string(u[0]) + ", Q=" + std::to_string(u[1]) + ")");
    out[0] = std::log(u[0] / eq_.P);
    out[1] = std::log(u[1] / eq_.Q);
}

double DimerizationModel::lyapunov_potential_psi(const double* u) const {
    if (!admissible(u))
        throw AdmissibilityError("Lyapunov potential at nonpositive state (P=" +
                                 std::to_string(u[0]) + ", Q=" + std::to_string(u[1]) + ")");
    return (u[0] - eq_.P) + (u[1] - eq_.Q);
}

void DimerizationModel::du_dw(const double* u, double* out) const {
    out[0] = u[0];
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = u[1];
}

void DimerizationModel::viscous_chat(const double* u, double t, int l, int m,
                                     double* out) const {
    if (!admissible(u))
        throw AdmissibilityError("viscous coefficient at nonpositive state (P=" +
                                 std::to_string(u[0]) + ", Q=" + std::to_string(u[1]) + ")");
    const double c = (l == m) ? params_.d * diffusion_factor(t) : 0.0;
    out[0] = c * u[0];
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = c * u[1];
}

void DimerizationModel::viscous_chat_all(const double* u, double t, int dim,
                                         double* out) const {
    if (!admissible(u))
        throw AdmissibilityError("viscous coefficient at nonpositive state (P=" +
                                 std::to_string(u[0]) + ", Q=" + std::to_string(u[1]) + ")");
    const double c = params_.d * diffusion_factor(t);
    for (int i = 0; i < dim * dim * 4; ++i) out[i] = 0.0;
    for (int l = 0; l < dim; ++l) {
        double* block = out + (l * dim + l) * 4;
        block[0] = c * u[0];
        block[3] = c * u[1];
    }
}

double DimerizationModel::normal_speed(const double* u, const double* m, int dim) const {
    (void)u; // linear convection: the speed is state-independent
    double s = 0.0;
    for (int l = 0; l < dim; ++l) s += m[l] * params_.a[l];
    return s;
}

double DimerizationModel::diffusion_factor(double t) const {
    return params_.time_dependent_diffusion ? 1.0 + 0.5 * std::sin(2.0 * M_PI * t) : 1.0;
}

namespace {

// phi, dphi/dx_i and d2phi/dx_i^2 of one factor of the manufactured field.
void mms_factor(double xi, double t, bool sqrt_form,
                double& phi, double& dphi, double& ddphi) {
    const double theta = M_PI * (xi - t);
    const double g = std::cos(theta);
    const double sg = std::sin(theta);
    if (sqrt_form) {
        if (g <= 0.0)
            throw ConfigError("sqrt-form manufactured solution needs cos(pi(x_i - t)) > 0 "
                              "at every evaluation point; restrict the domain or use the "
                              "default form");
        const double root = std::sqrt(g);
        phi = 1.25 + 0.75 * root;
        dphi = -0.375 * M_PI * sg / root;
        ddphi = -0.375 * M_PI * M_PI * (root + sg * sg / (2.0 * g * root));
    } else {
        phi = 1.25 + 0.75 * g;
        dphi = -0.75 * M_PI * sg;
        ddphi = -0.75 * M_PI * M_PI * g;
    }
}

} // namespace

void mms_solution(int dim, const double* x, double t, bool sqrt_form, double* u) {
    double prod = 1.0;
    for (int i = 0; i < dim; ++i) {
        double phi, dphi, ddphi;
        mms_factor(x[i], t, sqrt_form, phi, dphi, ddphi);
        prod *= phi;
    }
    u[0] = prod;
    u[1] = prod;
}

void mms_forcing(const DimerParams& params, int dim, const double* x, double t,
                 bool sqrt_form, double* out) {
    double phi[3], dphi[3], ddphi[3];
    double prod = 1.0;
    for (int i = 0; i < dim; ++i) {
        mms_factor(x[i], t, sqrt_form, phi[i], dphi[i], ddphi[i]);
        prod *= phi[i];
    }
    // Each factor depends on x_i - t, so d phi_i/dt = -d phi_i/dx_i; both
    // factors are bounded away from zero, which makes prod/phi_i safe.
    double du_dt = 0.0, advection = 0.0, laplacian = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double rest = prod / phi[i];
        du_dt += -dphi[i] * rest;
        advection += params.a[i] * dphi[i] * rest;
        laplacian += ddphi[i] * rest;
    }
    const double cfact =
        params.time_dependent_diffusion ? 1.0 + 0.5 * std::sin(2.0 * M_PI * t) : 1.0;
    const double forward = params.k_f * prod * prod;
    const double reverse = params.k_r * prod;
    const double transport = du_dt + advection - params.d * cfact * laplacian;
    out[0] = transport - (-2.0 * forward + 2.0 * reverse);
    out[1] = transport - (forward - reverse);
}

} // namespace lyapdg
