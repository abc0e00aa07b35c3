#pragma once

// Element-wise semi-discrete right-hand side: Hadamard-form convective
// volume terms built from two-point fluxes, viscous terms in gradient form
// with interface-corrected gradients, interface coupling and dissipation
// penalties, and pointwise reaction/forcing. Alongside du/dt, every
// evaluation returns the instantaneous Lyapunov budget, whose terms cancel
// to roundoff by construction; the residual column is the proof.

#include <functional>
#include <vector>

#include "lyapdg/mesh.hpp"
#include "lyapdg/model.hpp"
#include "lyapdg/sbp.hpp"

namespace lyapdg {

// Flat nodal state: r components per node, nodes lexicographic per element,
// elements in mesh id order.
struct GlobalState {
    double t = 0.0;
    std::vector<double> u;
};

struct RhsConfig {
    bool enable_viscous = true;
    bool enable_diss_c = true;  // upwind-type convective interface dissipation
    bool enable_diss_d = true;  // interior-penalty viscous interface dissipation
    bool enable_reaction = true;
    bool mms_forcing = false;   // add the manufactured-solution source term
};

// One evaluation's Lyapunov budget, all terms in the w^T M J inner product:
// dVdt = Xi + forcing - DT + boundary up to roundoff (residual).
struct LyapunovBalanceTerms {
    double dVdt = 0.0;     // w^T M J du/dt, the functional's instantaneous rate
    double Xi = 0.0;       // reaction contribution, <= 0 for dissipative models
    double DT = 0.0;       // volume + interface dissipation, >= 0, enters as -DT
    double forcing = 0.0;  // manufactured-forcing contribution
    double boundary = 0.0; // telescoped boundary flux, identically 0 (periodic)
    double residual = 0.0; // dVdt - Xi - forcing + DT - boundary
};

// Source term sampled at physical node coordinates.
using ForcingFunction = std::function<void(int dim, const double* x, double t, double* out)>;

// Assembles du/dt for a fixed (mesh, metrics, operators, model) tuple. The
// referenced objects must outlive the instance. Evaluation is serial with a
// fixed accumulation order, so results are bitwise reproducible; scratch
// buffers are preallocated members, making assemble_rhs allocation-free but
// not reentrant.
class SemidiscreteRhs {
public:
    SemidiscreteRhs(const MeshGeometry& mesh, const MetricData& metrics,
                    const TensorOperatorSet& ops, const ModelContract& model,
                    const RhsConfig& config, ForcingFunction forcing = {});

    int dofs() const {
        return mesh_.n_elements * ops_.nodes_per_element * model_.components();
    }
    const MeshGeometry& mesh() const { return mesh_; }
    const MetricData& metrics() const { return metrics_; }
    const TensorOperatorSet& ops() const { return ops_; }
    const ModelContract& model() const { return model_; }
    const RhsConfig& config() const { return config_; }

    // du/dt and the Lyapunov budget in one pass. Throws AdmissibilityError
    // with element/node location if the state has left the admissible set.
    LyapunovBalanceTerms assemble_rhs(const GlobalState& state,
                                      std::vector<double>& dudt) const;

    // Stage entry points for the verification suite; each recomputes the
    // Lyapunov variables it needs. out spans hold r components per node.
    //
    // Convective Hadamard volume contribution of one element (nodes_per_element
    // nodes), before the 1/J scaling.
    void convective_volume(const GlobalState& state, int element, double* out) const;
    // Convective interface penalty of one interface: face-node contributions
    // to the max side and the min side (face nodes in paired order).
    void sat_convective(const GlobalState& state, int iface,
                        double* out_max, double* out_min) const;
    // Interface-corrected gradient of the Lyapunov variables of one element,
    // one array per reference direction.
    void viscous_theta(const GlobalState& state, int element,
                       std::vector<std::vector<double>>& theta) const;

private:
    void compute_w(const GlobalState& state) const;
    void hadamard_element(int e, const double* ue, const double* we, double* acc) const;
    void theta_element(int e, const double* we) const;
    void viscous_element(int e, double t, const double* ue, const double* we,
                         double* acc, double& dt_vol) const;
    // Normal-direction viscous coefficient block at a face node, r*r.
    void vt_normal_block(int e, int direction, int node, const double* chat,
                         double* out) const;
    const double* fv_face(int e, int direction, int side) const {
        return fvface_.data() + ((e * mesh_.dim + direction) * 2 + side) * nf_ * r_;
    }

    const MeshGeometry& mesh_;
    const MetricData& metrics_;
    const TensorOperatorSet& ops_;
    const ModelContract& model_;
    RhsConfig config_;
    ForcingFunction forcing_;
    int r_ = 0;
    int nf_ = 0; // face nodes per face

    // Scratch, sized once at construction. w_ holds the Lyapunov variables of
    // the whole state, spatial_ the reference-space spatial terms, fvface_
    // the face traces of the normal viscous flux for the interface penalty.
    mutable std::vector<double> w_;
    mutable std::vector<double> spatial_;
    mutable std::vector<double> fvface_;
    mutable std::vector<double> chat_;
    mutable std::vector<double> dtmp_;
    mutable std::array<std::vector<double>, 3> theta_;
    mutable std::array<std::vector<double>, 3> fv_;
};

} // namespace lyapdg
