#include "lyapdg/rhs.hpp"

#include <algorithm>
#include <cmath>

#include "lyapdg/errors.hpp"

namespace lyapdg {

namespace {
// Stack-buffer bound for per-node component vectors; checked at construction.
constexpr int max_r = 8;
}

SemidiscreteRhs::SemidiscreteRhs(const MeshGeometry& mesh, const MetricData& metrics,
                                 const TensorOperatorSet& ops, const ModelContract& model,
                                 const RhsConfig& config, ForcingFunction forcing)
    : mesh_(mesh), metrics_(metrics), ops_(ops), model_(model),
      config_(config), forcing_(std::move(forcing)) {
    r_ = model.components();
    if (r_ < 1 || r_ > max_r)
        throw UsageError("model component count must lie in [1,8]");
    if (ops.dim != mesh.dim)
        throw UsageError("operator set and mesh disagree on the dimension");
    if (ops.r != r_)
        throw UsageError("operator set was extended for a different component count");
    if (metrics.nn != ops.nodes_per_element)
        throw UsageError("metric data does not match the operator set");
    if (config.mms_forcing && !forcing_)
        throw UsageError("mms_forcing enabled but no forcing function supplied");

    const int nn = ops.nodes_per_element;
    const int dim = mesh.dim;
    nf_ = nn / ops.n1d;
    w_.resize(dofs());
    spatial_.resize(dofs());
    fvface_.resize(mesh.n_elements * dim * 2 * nf_ * r_);
    chat_.resize(nn * dim * dim * r_ * r_);
    dtmp_.resize(nn * r_);
    for (int i = 0; i < dim; ++i) {
        theta_[i].resize(nn * r_);
        fv_[i].resize(nn * r_);
    }
}

void SemidiscreteRhs::compute_w(const GlobalState& state) const {
    if ((int)state.u.size() != dofs())
        throw UsageError("state size does not match the discretization");
    const int nn = ops_.nodes_per_element;
    for (int e = 0; e < mesh_.n_elements; ++e)
        for (int n = 0; n < nn; ++n) {
            const double* un = state.u.data() + (e * nn + n) * r_;
            if (!model_.admissible(un))
                throw AdmissibilityError("inadmissible state during right-hand-side assembly",
                                         e, n);
            model_.lyapunov_W(un, w_.data() + (e * nn + n) * r_);
        }
}

void SemidiscreteRhs::hadamard_element(int e, const double* ue, const double* we,
                                       double* acc) const {
    const int dim = mesh_.dim;
    const int n1 = ops_.n1d;
    const double* dmat = ops_.op1d.d.data();
    double mavg[3], fpair[max_r];

    for (int i = 0; i < dim; ++i) {
        const double* ja[3];
        for (int l = 0; l < dim; ++l) ja[l] = metrics_.ja_plane(e, i, l);
        const int str = ops_.stride[i];
        for (const int base : ops_.line_base[i]) {
            for (int a = 0; a < n1; ++a) {
                const int na = base + a * str;
                // Diagonal pair (a,a): the two-point flux collapses to the
                // consistent flux with the node's own metric row.
                for (int l = 0; l < dim; ++l) mavg[l] = ja[l][na];
                model_.convective_flux_normal(ue + na * r_, mavg, dim, fpair);
                const double daa = dmat[a * n1 + a];
                for (int c = 0; c < r_; ++c) acc[na * r_ + c] -= 2.0 * daa * fpair[c];
                for (int b = a + 1; b < n1; ++b) {
                    const int nb = base + b * str;
                    for (int l = 0; l < dim; ++l) mavg[l] = 0.5 * (ja[l][na] + ja[l][nb]);
                    model_.two_point_flux_normal(ue + na * r_, we + na * r_,
                                                 ue + nb * r_, we + nb * r_,
                                                 mavg, dim, fpair);
                    const double dab = dmat[a * n1 + b];
                    const double dba = dmat[b * n1 + a];
                    for (int c = 0; c < r_; ++c) {
                        acc[na * r_ + c] -= 2.0 * dab * fpair[c];
                        acc[nb * r_ + c] -= 2.0 * dba * fpair[c];
                    }
                }
            }
        }
    }
}

void SemidiscreteRhs::theta_element(int e, const double* we) const {
    const int dim = mesh_.dim;
    const int nn = ops_.nodes_per_element;
    const double half = 0.5 / ops_.h_end();
    for (int j = 0; j < dim; ++j) {
        ops_.apply_d(j, we, theta_[j].data());
        // Gradient penalty on the two faces orthogonal to xi_j: pull the own
        // trace halfway toward the neighbor trace. The max face couples to
        // the neighbor's min face and vice versa; paired nodes share index.
        const auto& fmax = ops_.face(j, 1);
        const auto& fmin = ops_.face(j, 0);
        const double* w_up = w_.data() + mesh_.neighbor(e, j, 1) * nn * r_;
        const double* w_dn = w_.data() + mesh_.neighbor(e, j, 0) * nn * r_;
        for (int jf = 0; jf < nf_; ++jf) {
            const int n_own = fmax.volume_nodes[jf];
            const int n_adj = fmin.volume_nodes[jf];
            for (int c = 0; c < r_; ++c)
                theta_[j][n_own * r_ + c] -=
                    half * (we[n_own * r_ + c] - w_up[n_adj * r_ + c]);
        }
        for (int jf = 0; jf < nf_; ++jf) {
            const int n_own = fmin.volume_nodes[jf];
            const int n_adj = fmax.volume_nodes[jf];
            for (int c = 0; c < r_; ++c)
                theta_[j][n_own * r_ + c] +=
                    half * (we[n_own * r_ + c] - w_dn[n_adj * r_ + c]);
        }
    }
}

void SemidiscreteRhs::viscous_element(int e, double t, const double* ue, const double* we,
                                      double* acc, double& dt_vol) const {
    const int dim = mesh_.dim;
    const int nn = ops_.nodes_per_element;
    const int rr = r_ * r_;

    theta_element(e, we);
    for (int n = 0; n < nn; ++n)
        model_.viscous_chat_all(ue + n * r_, t, dim, chat_.data() + n * dim * dim * rr);

    // fv_i = sum_j Vt_{i,j} Theta_j, contracted without forming Vt:
    // temp_m = sum_j Ja_jm Theta_j, y_l = (1/J) sum_m Chat_lm temp_m,
    // fv_i = sum_l Ja_il y_l.
    double temp[3][max_r], y[3][max_r];
    for (int n = 0; n < nn; ++n) {
        for (int m = 0; m < dim; ++m) {
            for (int c = 0; c < r_; ++c) temp[m][c] = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double jam = metrics_.ja_plane(e, j, m)[n];
                for (int c = 0; c < r_; ++c) temp[m][c] += jam * theta_[j][n * r_ + c];
            }
        }
        const double invj = 1.0 / metrics_.J(e, n);
        const double* cn = chat_.data() + n * dim * dim * rr;
        for (int l = 0; l < dim; ++l) {
            for (int c = 0; c < r_; ++c) y[l][c] = 0.0;
            for (int m = 0; m < dim; ++m) {
                const double* block = cn + (l * dim + m) * rr;
                for (int c = 0; c < r_; ++c)
                    for (int b = 0; b < r_; ++b)
                        y[l][c] += block[c * r_ + b] * temp[m][b];
            }
            for (int c = 0; c < r_; ++c) y[l][c] *= invj;
        }
        for (int i = 0; i < dim; ++i) {
            double* out = fv_[i].data() + n * r_;
            for (int c = 0; c < r_; ++c) out[c] = 0.0;
            for (int l = 0; l < dim; ++l) {
                const double jai = metrics_.ja_plane(e, i, l)[n];
                for (int c = 0; c < r_; ++c) out[c] += jai * y[l][c];
            }
        }
        // Volume share of the dissipation: Theta^T M Vt Theta at this node.
        double q = 0.0;
        for (int i = 0; i < dim; ++i)
            for (int c = 0; c < r_; ++c)
                q += theta_[i][n * r_ + c] * fv_[i][n * r_ + c];
        dt_vol += ops_.mass[n] * q;
    }

    for (int i = 0; i < dim; ++i) {
        ops_.apply_d(i, fv_[i].data(), dtmp_.data());
        for (int k = 0; k < nn * r_; ++k) acc[k] += dtmp_[k];
        for (int side = 0; side < 2; ++side) {
            const auto& face = ops_.face(i, side);
            double* trace = fvface_.data() + ((e * dim + i) * 2 + side) * nf_ * r_;
            for (int jf = 0; jf < nf_; ++jf)
                for (int c = 0; c < r_; ++c)
                    trace[jf * r_ + c] = fv_[i][face.volume_nodes[jf] * r_ + c];
        }
    }
}

void SemidiscreteRhs::vt_normal_block(int e, int direction, int node, const double* chat,
                                      double* out) const {
    const int dim = mesh_.dim;
    const int rr = r_ * r_;
    double mrow[3];
    for (int l = 0; l < dim; ++l) mrow[l] = metrics_.ja_plane(e, direction, l)[node];
    const double invj = 1.0 / metrics_.J(e, node);
    for (int k = 0; k < rr; ++k) out[k] = 0.0;
    for (int l = 0; l < dim; ++l)
        for (int m = 0; m < dim; ++m) {
            const double coef = mrow[l] * mrow[m] * invj;
            const double* block = chat + (l * dim + m) * rr;
            for (int k = 0; k < rr; ++k) out[k] += coef * block[k];
        }
}

LyapunovBalanceTerms SemidiscreteRhs::assemble_rhs(const GlobalState& state,
                                                   std::vector<double>& dudt) const {
    const int dim = mesh_.dim;
    const int nn = ops_.nodes_per_element;
    compute_w(state);
    std::fill(spatial_.begin(), spatial_.end(), 0.0);

    double dt_vol = 0.0;
    for (int e = 0; e < mesh_.n_elements; ++e) {
        const double* ue = state.u.data() + e * nn * r_;
        const double* we = w_.data() + e * nn * r_;
        double* acc = spatial_.data() + e * nn * r_;
        hadamard_element(e, ue, we, acc);
        if (config_.enable_viscous) viscous_element(e, state.t, ue, we, acc, dt_vol);
    }

    // Interface pass: each coupling is evaluated once and scattered to both
    // sides, keeping the two contributions exact mirrors of each other.
    const double hinv = 1.0 / ops_.h_end();
    double dt_face = 0.0;
    double mk[3], ma[3], msh[3];
    double fhat_k[max_r], fhat_a[max_r], fshared[max_r], dw[max_r], val[max_r];
    double cbuf_k[9 * max_r * max_r], cbuf_a[9 * max_r * max_r];
    double cto[max_r * max_r], bk[max_r * max_r], ba[max_r * max_r];
    for (std::size_t f = 0; f < mesh_.interfaces.size(); ++f) {
        const auto& iface = mesh_.interfaces[f];
        const int i = iface.direction;
        const int ek = iface.elem_max;
        const int ea = iface.elem_min;
        const auto& fmax = ops_.face(i, 1);
        const auto& fmin = ops_.face(i, 0);
        const double* uk = state.u.data() + ek * nn * r_;
        const double* ua = state.u.data() + ea * nn * r_;
        const double* wk = w_.data() + ek * nn * r_;
        const double* wa = w_.data() + ea * nn * r_;
        double* spk = spatial_.data() + ek * nn * r_;
        double* spa = spatial_.data() + ea * nn * r_;
        const double* mbar = metrics_.face_mbar[f].data();

        const double* fvk = config_.enable_viscous ? fv_face(ek, i, 1) : nullptr;
        const double* fva = config_.enable_viscous ? fv_face(ea, i, 0) : nullptr;
        const bool diss_d = config_.enable_viscous && config_.enable_diss_d;

        for (int jf = 0; jf < nf_; ++jf) {
            const int nk = fmax.volume_nodes[jf];
            const int na = fmin.volume_nodes[jf];
            const double* uk_n = uk + nk * r_;
            const double* ua_n = ua + na * r_;
            for (int l = 0; l < dim; ++l) {
                mk[l] = metrics_.ja_plane(ek, i, l)[nk];
                ma[l] = metrics_.ja_plane(ea, i, l)[na];
                msh[l] = mbar[l * nf_ + jf];
            }

            // Convective coupling: replace each side's own boundary flux by
            // the shared two-point flux through the face-averaged metric.
            model_.convective_flux_normal(uk_n, mk, dim, fhat_k);
            model_.convective_flux_normal(ua_n, ma, dim, fhat_a);
            model_.two_point_flux_normal(uk_n, wk + nk * r_, ua_n, wa + na * r_,
                                         msh, dim, fshared);
            for (int c = 0; c < r_; ++c) {
                spk[nk * r_ + c] += hinv * (fhat_k[c] - fshared[c]);
                spa[na * r_ + c] -= hinv * (fhat_a[c] - fshared[c]);
            }

            for (int c = 0; c < r_; ++c) dw[c] = wk[nk * r_ + c] - wa[na * r_ + c];
            const double pperp = fmax.p_perp[jf];

            // Viscous flux coupling: both sides move halfway toward the
            // other trace; the two E-term halves then cancel in the sum.
            if (config_.enable_viscous) {
                for (int c = 0; c < r_; ++c) {
                    const double dfv = 0.5 * hinv * (fvk[jf * r_ + c] - fva[jf * r_ + c]);
                    spk[nk * r_ + c] -= dfv;
                    spa[na * r_ + c] -= dfv;
                }
            }

            if (diss_d || config_.enable_diss_c) {
                if (diss_d) {
                    model_.viscous_chat_all(uk_n, state.t, dim, cbuf_k);
                    model_.viscous_chat_all(ua_n, state.t, dim, cbuf_a);
                    vt_normal_block(ek, i, nk, cbuf_k, bk);
                    vt_normal_block(ea, i, na, cbuf_a, ba);
                    for (int k = 0; k < r_ * r_; ++k) cto[k] = 0.5 * (bk[k] + ba[k]);
                    double quad = 0.0;
                    for (int c = 0; c < r_; ++c) {
                        val[c] = 0.0;
                        for (int b = 0; b < r_; ++b) val[c] += cto[c * r_ + b] * dw[b];
                        quad += dw[c] * val[c];
                    }
                    for (int c = 0; c < r_; ++c) {
                        spk[nk * r_ + c] -= hinv * val[c];
                        spa[na * r_ + c] += hinv * val[c];
                    }
                    dt_face += pperp * quad;
                }
                if (config_.enable_diss_c) {
                    // Upwind-type penalty: |normal speed| times the averaged
                    // change of variables, acting on the w jump.
                    model_.du_dw(uk_n, bk);
                    model_.du_dw(ua_n, ba);
                    const double lambda =
                        0.5 * (std::abs(model_.normal_speed(uk_n, msh, dim)) +
                               std::abs(model_.normal_speed(ua_n, msh, dim)));
                    double quad = 0.0;
                    for (int c = 0; c < r_; ++c) {
                        val[c] = 0.0;
                        for (int b = 0; b < r_; ++b)
                            val[c] += 0.5 * (bk[c * r_ + b] + ba[c * r_ + b]) * dw[b];
                        quad += dw[c] * val[c];
                    }
                    const double scale = 0.5 * lambda;
                    for (int c = 0; c < r_; ++c) {
                        spk[nk * r_ + c] -= hinv * scale * val[c];
                        spa[na * r_ + c] += hinv * scale * val[c];
                    }
                    dt_face += pperp * scale * quad;
                }
            }
        }
    }

    // Physical-space right-hand side and the Lyapunov budget contractions.
    dudt.assign(dofs(), 0.0);
    LyapunovBalanceTerms terms;
    terms.DT = dt_vol + dt_face;
    double rnode[max_r], fnode[max_r];
    for (int c = 0; c < r_; ++c) rnode[c] = fnode[c] = 0.0;
    for (int e = 0; e < mesh_.n_elements; ++e) {
        const double* xe = metrics_.coords[e].data();
        for (int n = 0; n < nn; ++n) {
            const int at = (e * nn + n) * r_;
            const double invj = 1.0 / metrics_.J(e, n);
            const double mj = ops_.mass[n] * metrics_.J(e, n);
            if (config_.enable_reaction)
                model_.reaction(state.u.data() + at, state.t, rnode);
            if (config_.mms_forcing)
                forcing_(dim, xe + n * dim, state.t, fnode);
            for (int c = 0; c < r_; ++c) {
                dudt[at + c] = spatial_[at + c] * invj + rnode[c] + fnode[c];
                const double wmj = w_[at + c] * mj;
                terms.dVdt += wmj * dudt[at + c];
                terms.Xi += wmj * rnode[c];
                terms.forcing += wmj * fnode[c];
            }
        }
    }
    terms.boundary = 0.0;
    terms.residual = terms.dVdt - terms.Xi - terms.forcing + terms.DT - terms.boundary;
    return terms;
}

void SemidiscreteRhs::convective_volume(const GlobalState& state, int element,
                                        double* out) const {
    compute_w(state);
    const int nn = ops_.nodes_per_element;
    std::fill(out, out + nn * r_, 0.0);
    hadamard_element(element, state.u.data() + element * nn * r_,
                     w_.data() + element * nn * r_, out);
}

void SemidiscreteRhs::sat_convective(const GlobalState& state, int iface,
                                     double* out_max, double* out_min) const {
    compute_w(state);
    const int dim = mesh_.dim;
    const int nn = ops_.nodes_per_element;
    const auto& face = mesh_.interfaces[iface];
    const int i = face.direction;
    const auto& fmax = ops_.face(i, 1);
    const auto& fmin = ops_.face(i, 0);
    const double* uk = state.u.data() + face.elem_max * nn * r_;
    const double* ua = state.u.data() + face.elem_min * nn * r_;
    const double* wk = w_.data() + face.elem_max * nn * r_;
    const double* wa = w_.data() + face.elem_min * nn * r_;
    const double* mbar = metrics_.face_mbar[iface].data();
    const double hinv = 1.0 / ops_.h_end();
    double mk[3], ma[3], msh[3], fhat[max_r], fshared[max_r];
    for (int jf = 0; jf < nf_; ++jf) {
        const int nk = fmax.volume_nodes[jf];
        const int na = fmin.volume_nodes[jf];
        for (int l = 0; l < dim; ++l) {
            mk[l] = metrics_.ja_plane(face.elem_max, i, l)[nk];
            ma[l] = metrics_.ja_plane(face.elem_min, i, l)[na];
            msh[l] = mbar[l * nf_ + jf];
        }
        model_.two_point_flux_normal(uk + nk * r_, wk + nk * r_, ua + na * r_,
                                     wa + na * r_, msh, dim, fshared);
        model_.convective_flux_normal(uk + nk * r_, mk, dim, fhat);
        for (int c = 0; c < r_; ++c)
            out_max[jf * r_ + c] = hinv * (fhat[c] - fshared[c]);
        model_.convective_flux_normal(ua + na * r_, ma, dim, fhat);
        for (int c = 0; c < r_; ++c)
            out_min[jf * r_ + c] = -hinv * (fhat[c] - fshared[c]);
    }
}

void SemidiscreteRhs::viscous_theta(const GlobalState& state, int element,
                                    std::vector<std::vector<double>>& theta) const {
    compute_w(state);
    theta_element(element, w_.data() + element * ops_.nodes_per_element * r_);
    theta.assign(mesh_.dim, {});
    for (int j = 0; j < mesh_.dim; ++j) theta[j] = theta_[j];
}

} // namespace lyapdg
