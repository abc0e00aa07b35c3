#pragma once

// Model contract for convection-diffusion-reaction systems equipped with a
// Lyapunov function, and the reversible-dimerization instance (monomers P
// pair into dimers Q and back). The contract is what the spatial and
// temporal modules program against; only the dimerization model ships.

#include <array>
#include <string>
#include <vector>

namespace lyapdg {

// Behavioral interface. All methods are pure functions of their arguments;
// instances carry only immutable parameters, so they are safe to share.
// Raw-pointer spans keep the hot entropy-flux path allocation-free: u, w
// point at r contiguous components, m at dim metric coefficients.
class ModelContract {
public:
    virtual ~ModelContract() = default;

    virtual int components() const = 0;

    virtual void reaction(const double* u, double t, double* out) const = 0;

    // Convective flux in physical direction l, and its two-point companion.
    virtual void convective_flux(const double* u, int l, double* out) const = 0;
    virtual void two_point_flux(const double* ua, const double* ub, int l,
                                double* out) const = 0;

    // Metric-contracted variants: sum_l m[l] * F_l. The two-point form also
    // receives the Lyapunov variables of both states so implementations can
    // reuse logarithms already computed for the dissipation terms instead of
    // taking fresh ones per node pair.
    virtual void convective_flux_normal(const double* u, const double* m, int dim,
                                        double* out) const;
    virtual void two_point_flux_normal(const double* ua, const double* wa,
                                       const double* ub, const double* wb,
                                       const double* m, int dim, double* out) const;

    // Lyapunov function V >= 0 (zero only at the reference equilibrium), its
    // gradient W = (dV/dU)^T, the potential psi = W^T U - V, and the change
    // of variables dU/dW (r*r row-major, the inverse Hessian of V).
    virtual double lyapunov_V(const double* u) const = 0;
    virtual void lyapunov_W(const double* u, double* out) const = 0;
    virtual double lyapunov_potential_psi(const double* u) const = 0;
    virtual void du_dw(const double* u, double* out) const = 0;

    // Viscous coefficient in Lyapunov variables: the (l,m) block of the grad-W
    // formulation, r*r row-major. viscous_chat_all fills all dim*dim blocks at
    // out[(l*dim + m)*r*r + ...] in one call.
    virtual void viscous_chat(const double* u, double t, int l, int m,
                              double* out) const = 0;
    virtual void viscous_chat_all(const double* u, double t, int dim,
                                  double* out) const;

    // Signed characteristic speed of the m-contracted convective flux; its
    // magnitude scales the convective interface dissipation.
    virtual double normal_speed(const double* u, const double* m, int dim) const = 0;

    virtual bool admissible(const double* u) const = 0;

    // Reference equilibrium state (r components).
    virtual const std::vector<double>& equilibrium() const = 0;
};

struct DimerParams {
    double k_f = 1.0;  // dimerization rate, >= 0
    double k_r = 1.0;  // dissociation rate, > 0
    double d = 0.0;    // diffusion coefficient, >= 0
    std::array<double, 3> a{0.0, 0.0, 0.0}; // convection velocity
    bool time_dependent_diffusion = false;  // diffusion scaled by 1 + 0.5 sin(2 pi t)
};

struct EquilibriumPoint {
    double P = 0.0;
    double Q = 0.0;
};

// Unique positive equilibrium with conserved mass M = P + 2Q and detailed
// balance k_f P^2 = k_r Q. Throws ConfigError on nonpositive inputs.
EquilibriumPoint equilibrium_from_mass(double mass, double k_f, double k_r);

// Logarithmic mean (x - y)/(ln x - ln y), continuously extended across x = y
// by a series in u = ((x/y - 1)/(x/y + 1))^2. Throws AdmissibilityError on
// nonpositive arguments. The cached variant takes precomputed ln x, ln y and
// skips the positivity check; it is the hot-loop entry point.
double log_mean(double x, double y);
double log_mean_cached(double x, double y, double log_x, double log_y);

// Reversible dimerization 2P <-> Q with linear convection a.grad(U) and
// isotropic diffusion d. Lyapunov machinery is relative to the stored
// equilibrium; the constructor rejects references that break detailed
// balance, since those would void the reaction dissipativity bound.
class DimerizationModel : public ModelContract {
public:
    DimerizationModel(const DimerParams& params, const EquilibriumPoint& eq);

    int components() const override { return 2; }
    void reaction(const double* u, double t, double* out) const override;
    void convective_flux(const double* u, int l, double* out) const override;
    void two_point_flux(const double* ua, const double* ub, int l,
                        double* out) const override;
    void two_point_flux_normal(const double* ua, const double* wa,
                               const double* ub, const double* wb,
                               const double* m, int dim, double* out) const override;
    double lyapunov_V(const double* u) const override;
    void lyapunov_W(const double* u, double* out) const override;
    double lyapunov_potential_psi(const double* u) const override;
    void du_dw(const double* u, double* out) const override;
    void viscous_chat(const double* u, double t, int l, int m,
                      double* out) const override;
    void viscous_chat_all(const double* u, double t, int dim,
                          double* out) const override;
    double normal_speed(const double* u, const double* m, int dim) const override;
    bool admissible(const double* u) const override { return u[0] > 0.0 && u[1] > 0.0; }
    const std::vector<double>& equilibrium() const override { return eq_state_; }

    const DimerParams& params() const { return params_; }
    const EquilibriumPoint& equilibrium_point() const { return eq_; }
    // Density of the reaction-conserved mass, P + 2Q.
    static double conserved_mass_density(const double* u) { return u[0] + 2.0 * u[1]; }
    // Diffusion scale at time t: 1 unless the time-dependent flag is set.
    double diffusion_factor(double t) const;

private:
    DimerParams params_;
    EquilibriumPoint eq_;
    std::vector<double> eq_state_;
};

// Manufactured field for convergence studies: both components equal
// prod_i phi(x_i - t) with phi(s) = 1.25 + 0.75 cos(pi s). Each factor has
// period 2, so periodic boxes need even integer side lengths (e.g. [0,2]^dim)
// for the field to stay continuous across the wrap. sqrt_form replaces cos
// by sqrt(cos) and is only real where every cos(pi(x_i - t)) > 0, so it
// throws ConfigError outside that region.
void mms_solution(int dim, const double* x, double t, bool sqrt_form, double* u);

// Forcing that makes the manufactured field an exact solution:
// dU*/dt + a.grad(U*) - d*C_fact(t)*lap(U*) - reaction(U*). Closed form.
void mms_forcing(const DimerParams& params, int dim, const double* x, double t,
                 bool sqrt_form, double* out);

} // namespace lyapdg
