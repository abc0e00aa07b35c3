#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lyapdg/errors.hpp"
#include "lyapdg/mesh.hpp"
#include "lyapdg/model.hpp"
#include "lyapdg/rhs.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <random>

using namespace lyapdg;

namespace {

struct Setup {
    TensorOperatorSet ops;
    MeshGeometry mesh;
    MetricData metrics;
};

Setup make_setup(int dim, int p, const std::array<int, 3>& k, const Box& box,
                 double warp = 0.0) {
    Setup s{extend_tensor(build_sbp_d1(p), dim, 2), build_box_mesh(dim, k, box), {}};
    Mapping map;
    if (warp != 0.0) {
        map.kind = MappingKind::smooth_warp_2d;
        map.alpha = warp;
    }
    s.metrics = compute_metrics(s.mesh, apply_mapping(s.mesh, map, s.ops), s.ops);
    return s;
}

// Box [0, 2K]: elements of reference width, so J = 1 and the physical
// assembly coincides with the plain reference operators.
Box unit_jacobian_box(int k) {
    Box b;
    b.hi = {2.0 * k, 1.0, 1.0};
    return b;
}

DimerizationModel desk_model(std::array<double, 3> a = {1.0, 1.0, 1.0}, double d = 0.05,
                             bool modulated = false) {
    DimerParams params;
    params.k_f = 10.0;
    params.k_r = 1.0;
    params.d = d;
    params.a = a;
    params.time_dependent_diffusion = modulated;
    return DimerizationModel(params, equilibrium_from_mass(3.6, 10.0, 1.0));
}

GlobalState random_state(const Setup& s, int r, unsigned seed, double t = 0.0) {
    GlobalState st;
    st.t = t;
    std::mt19937_64 gen = oracles::rng(seed);
    std::uniform_real_distribution<double> dist(0.25, 2.5);
    st.u.resize((size_t)s.mesh.n_elements * s.ops.nodes_per_element * r);
    for (double& v : st.u) v = dist(gen);
    return st;
}

GlobalState constant_state(const Setup& s, double p_val, double q_val, double t = 0.0) {
    GlobalState st;
    st.t = t;
    const int nn = s.ops.nodes_per_element;
    st.u.resize((size_t)s.mesh.n_elements * nn * 2);
    for (int i = 0; i < s.mesh.n_elements * nn; ++i) {
        st.u[i * 2] = p_val;
        st.u[i * 2 + 1] = q_val;
    }
    return st;
}

double linf(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

std::vector<double> w_of(const ModelContract& model, const std::vector<double>& u) {
    const int r = model.components();
    std::vector<double> w(u.size());
    for (size_t i = 0; i < u.size(); i += r) model.lyapunov_W(&u[i], &w[i]);
    return w;
}

} // namespace

TEST_CASE("hadamard volume term matches the materialized two-point-flux product") {
    const DimerizationModel model = desk_model({0.8, -0.5, 0.0});

    // 1D single element on a width-2 box: metrics are identically one, so the
    // line sweep must reproduce -2 sum_j D(i,j) F(i,j) verbatim.
    {
        const Setup s = make_setup(1, 2, {1, 1, 1}, unit_jacobian_box(1));
        const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});
        const GlobalState st = random_state(s, 2, 21);
        const std::vector<double> w = w_of(model, st.u);

        const int n = s.ops.n1d;
        std::vector<double> got(n * 2);
        rhs.convective_volume(st, 0, got.data());

        const double m1 = 1.0;
        std::vector<double> want(n * 2, 0.0);
        double f[2];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double dij = s.ops.op1d.D(i, j);
                if (dij == 0.0) continue;
                model.two_point_flux_normal(&st.u[i * 2], &w[i * 2], &st.u[j * 2],
                                            &w[j * 2], &m1, 1, f);
                for (int c = 0; c < 2; ++c) want[i * 2 + c] -= 2.0 * dij * f[c];
            }
        for (int i = 0; i < n * 2; ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(2e-13));
    }

    // 2D warped element: node-dependent metric rows enter through their
    // pairwise averages.
    {
        const Setup s = make_setup(2, 2, {2, 2, 1}, Box{{0.0, 0.0, 0.0}, {2.0, 2.0, 1.0}},
                                   0.08);
        const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});
        const GlobalState st = random_state(s, 2, 22);
        const std::vector<double> w = w_of(model, st.u);

        const int nn = s.ops.nodes_per_element;
        const int e = 0;
        std::vector<double> got(nn * 2);
        rhs.convective_volume(st, e, got.data());

        std::vector<double> want(nn * 2, 0.0);
        double mavg[2], f[2];
        for (int dir = 0; dir < 2; ++dir) {
            const oracles::Mat dmat = oracles::tensor_derivative(s.ops.op1d, 2, dir);
            for (int na = 0; na < nn; ++na)
                for (int nb = 0; nb < nn; ++nb) {
                    const double dab = dmat(na, nb);
                    if (dab == 0.0) continue;
                    for (int l = 0; l < 2; ++l)
                        mavg[l] = 0.5 * (s.metrics.ja_plane(e, dir, l)[na] +
                                         s.metrics.ja_plane(e, dir, l)[nb]);
                    const int ua = (e * nn + na) * 2, ub = (e * nn + nb) * 2;
                    model.two_point_flux_normal(&st.u[ua], &w[ua], &st.u[ub], &w[ub],
                                                mavg, 2, f);
                    for (int c = 0; c < 2; ++c) want[na * 2 + c] -= 2.0 * dab * f[c];
                }
        }
        for (int i = 0; i < nn * 2; ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(2e-13));
    }
}

TEST_CASE("interface penalty vanishes on continuous traces and mirrors the flux difference") {
    const DimerizationModel model = desk_model();

    // constant state on a warped mesh: the shared flux equals each side's own
    // boundary flux because the conforming metric rows agree
    {
        const Setup s = make_setup(2, 3, {2, 2, 1}, Box{{0.0, 0.0, 0.0}, {2.0, 2.0, 1.0}},
                                   0.08);
        const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});
        const GlobalState st = constant_state(s, 1.3, 0.7);
        const int nf = s.ops.nodes_per_element / s.ops.n1d;
        std::vector<double> out_max(nf * 2), out_min(nf * 2);
        for (size_t f = 0; f < s.mesh.interfaces.size(); ++f) {
            rhs.sat_convective(st, (int)f, out_max.data(), out_min.data());
            CHECK(linf(out_max) <= 1e-13);
            CHECK(linf(out_min) <= 1e-13);
        }
    }

    // 1D random states: pin the sign convention of both sides against a
    // direct evaluation of the one-sided and shared fluxes
    {
        const Setup s = make_setup(1, 1, {2, 1, 1}, unit_jacobian_box(2));
        const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});
        const GlobalState st = random_state(s, 2, 23);
        const std::vector<double> w = w_of(model, st.u);
        const double hinv = 1.0 / s.ops.h_end();
        const double m1 = 1.0;
        const int n = s.ops.n1d;

        double out_max[2], out_min[2], fk[2], fa[2], fsh[2];
        for (size_t f = 0; f < s.mesh.interfaces.size(); ++f) {
            const Interface& iface = s.mesh.interfaces[f];
            const int nk = (iface.elem_max * n + (n - 1)) * 2;
            const int na = (iface.elem_min * n + 0) * 2;
            rhs.sat_convective(st, (int)f, out_max, out_min);
            model.convective_flux_normal(&st.u[nk], &m1, 1, fk);
            model.convective_flux_normal(&st.u[na], &m1, 1, fa);
            model.two_point_flux_normal(&st.u[nk], &w[nk], &st.u[na], &w[na], &m1, 1, fsh);
            for (int c = 0; c < 2; ++c) {
                CHECK(out_max[c] == doctest::Approx(hinv * (fk[c] - fsh[c])).epsilon(1e-14));
                CHECK(out_min[c] == doctest::Approx(-hinv * (fa[c] - fsh[c])).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("corrected gradient matches the global joint-averaged derivative matrix") {
    const DimerizationModel model = desk_model();
    const int p = 2, k = 2, n = p + 1;
    const Setup s = make_setup(1, p, {k, 1, 1}, unit_jacobian_box(k));
    const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});

    const GlobalState st = random_state(s, 2, 31);
    const std::vector<double> w = w_of(model, st.u);
    const oracles::Mat qc = oracles::global_gradient_matrix(s.ops.op1d, k);

    std::vector<std::vector<double>> theta;
    for (int c = 0; c < 2; ++c) {
        std::vector<double> wc(k * n);
        for (int i = 0; i < k * n; ++i) wc[i] = w[i * 2 + c];
        const std::vector<double> want = oracles::matvec(qc, wc);
        for (int e = 0; e < k; ++e) {
            rhs.viscous_theta(st, e, theta);
            REQUIRE((int)theta.size() == 1);
            for (int i = 0; i < n; ++i) {
                const double mi = s.ops.op1d.weights[i];
                CHECK(theta[0][i * 2 + c] ==
                      doctest::Approx(want[e * n + i] / mi).epsilon(1e-13));
            }
        }
    }

    // constant state: derivative and joint corrections both vanish
    const GlobalState flat = constant_state(s, 0.9, 1.1);
    for (int e = 0; e < k; ++e) {
        rhs.viscous_theta(flat, e, theta);
        CHECK(linf(theta[0]) <= 1e-14);
    }
}

TEST_CASE("assembled right-hand side reproduces the explicit global matrices") {
    for (const int p : {1, 2})
        for (const int k : {2, 3}) {
            CAPTURE(p);
            CAPTURE(k);
            const DimerizationModel model = desk_model({0.7, 0.0, 0.0}, 0.05, true);
            const Setup s = make_setup(1, p, {k, 1, 1}, unit_jacobian_box(k));
            RhsConfig cfg;
            cfg.enable_diss_c = false;
            cfg.enable_diss_d = false;
            const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, cfg);

            const GlobalState st = random_state(s, 2, 40 + p * 10 + k, 0.3);
            std::vector<double> dudt;
            const LyapunovBalanceTerms terms = rhs.assemble_rhs(st, dudt);

            const int n = s.ops.op1d.n;
            const int big = k * n;
            const oracles::Mat g = oracles::global_convective_matrix(s.ops.op1d, k);
            const oracles::Mat qc = oracles::global_gradient_matrix(s.ops.op1d, k);
            for (int i = 0; i < big; ++i)
                for (int j = 0; j < big; ++j) CHECK(g(i, j) + g(j, i) == 0.0);

            std::vector<double> mg(big);
            for (int i = 0; i < big; ++i) mg[i] = s.ops.op1d.weights[i % n];
            const std::vector<double> w = w_of(model, st.u);

            const double m1 = 1.0;
            double f[2], chat[4], rnode[2];
            std::vector<double> want(big * 2, 0.0);
            // convective: -M^-1 (G o F) 1 with F the two-point flux table
            for (int i = 0; i < big; ++i)
                for (int j = 0; j < big; ++j) {
                    if (g(i, j) == 0.0) continue;
                    model.two_point_flux_normal(&st.u[i * 2], &w[i * 2], &st.u[j * 2],
                                                &w[j * 2], &m1, 1, f);
                    for (int c = 0; c < 2; ++c) want[i * 2 + c] -= g(i, j) * f[c] / mg[i];
                }
            // viscous: -M^-1 Qc^T diag(Chat) M^-1 Qc w, componentwise
            for (int c = 0; c < 2; ++c) {
                std::vector<double> wc(big), fv(big);
                for (int i = 0; i < big; ++i) wc[i] = w[i * 2 + c];
                const std::vector<double> qcw = oracles::matvec(qc, wc);
                for (int i = 0; i < big; ++i) {
                    model.viscous_chat(&st.u[i * 2], st.t, 0, 0, chat);
                    fv[i] = chat[c * 2 + c] * qcw[i] / mg[i];
                }
                for (int i = 0; i < big; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < big; ++j) acc += qc(j, i) * fv[j];
                    want[i * 2 + c] -= acc / mg[i];
                }
            }
            for (int i = 0; i < big; ++i) {
                model.reaction(&st.u[i * 2], st.t, rnode);
                for (int c = 0; c < 2; ++c) want[i * 2 + c] += rnode[c];
            }

            const double scale = std::max(1.0, linf(dudt));
            for (int i = 0; i < big * 2; ++i)
                CHECK(std::abs(dudt[i] - want[i]) <= 1e-13 * scale);

            CHECK(terms.boundary == 0.0);
            CHECK(terms.forcing == 0.0);
            const double maxterm = std::max({std::abs(terms.dVdt), std::abs(terms.Xi),
                                             std::abs(terms.DT), 1.0});
            CHECK(std::abs(terms.residual) <= 1e-12 * maxterm);
        }
}

TEST_CASE("constant states are fixed points of the spatial operator") {
    const DimerizationModel model = desk_model();
    const std::vector<Setup> setups = [] {
        std::vector<Setup> v;
        v.push_back(make_setup(1, 2, {3, 1, 1}, Box{{0.0, 0.0, 0.0}, {1.7, 1.0, 1.0}}));
        v.push_back(make_setup(2, 1, {2, 3, 1}, Box{{0.0, 0.0, 0.0}, {1.0, 2.0, 1.0}}));
        v.push_back(make_setup(3, 1, {2, 2, 2}, Box{}));
        v.push_back(make_setup(2, 3, {2, 2, 1}, Box{{0.0, 0.0, 0.0}, {2.0, 2.0, 1.0}}, 0.08));
        return v;
    }();

    for (const Setup& s : setups) {
        CAPTURE(s.mesh.dim);
        std::vector<double> dudt;

        // free stream: any constant admissible state, reaction off
        RhsConfig freestream;
        freestream.enable_reaction = false;
        const SemidiscreteRhs rhs_fs(s.mesh, s.metrics, s.ops, model, freestream);
        rhs_fs.assemble_rhs(constant_state(s, 1.3, 0.7), dudt);
        CHECK(linf(dudt) <= 1e-12);

        // reaction back on: the equilibrium reference is a full fixed point
        const SemidiscreteRhs rhs_eq(s.mesh, s.metrics, s.ops, model, RhsConfig{});
        const EquilibriumPoint eq = model.equilibrium_point();
        rhs_eq.assemble_rhs(constant_state(s, eq.P, eq.Q), dudt);
        CHECK(linf(dudt) <= 1e-13);
    }
}

TEST_CASE("pure reaction configuration reduces to the pointwise reaction law") {
    const DimerizationModel model = desk_model({0.0, 0.0, 0.0}, 0.0);
    const Setup s = make_setup(1, 1, {2, 1, 1}, unit_jacobian_box(2));
    RhsConfig cfg;
    cfg.enable_viscous = false;
    const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, cfg);

    const GlobalState st = random_state(s, 2, 51, 0.2);
    std::vector<double> dudt;
    rhs.assemble_rhs(st, dudt);

    double rnode[2];
    for (size_t i = 0; i < st.u.size(); i += 2) {
        model.reaction(&st.u[i], st.t, rnode);
        CHECK(dudt[i] == rnode[0]);
        CHECK(dudt[i + 1] == rnode[1]);
    }
}

TEST_CASE("periodic assembly conserves mass and telescopes the flux terms") {
    const std::vector<Setup> setups = [] {
        std::vector<Setup> v;
        v.push_back(make_setup(1, 2, {3, 1, 1}, Box{{0.0, 0.0, 0.0}, {1.7, 1.0, 1.0}}));
        v.push_back(make_setup(2, 2, {2, 2, 1}, Box{{0.0, 0.0, 0.0}, {2.0, 2.0, 1.0}}, 0.06));
        return v;
    }();
    const DimerizationModel model = desk_model({1.0, -0.6, 0.0}, 0.05, true);

    for (const Setup& s : setups) {
        CAPTURE(s.mesh.dim);
        const int nn = s.ops.nodes_per_element;
        for (unsigned seed : {61u, 62u, 63u}) {
            const GlobalState st = random_state(s, 2, seed, 0.15);
            std::vector<double> dudt;

            // P + 2Q is conserved by transport, diffusion, and the reaction
            const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});
            rhs.assemble_rhs(st, dudt);
            double drift = 0.0, scale = 0.0;
            for (int e = 0; e < s.mesh.n_elements; ++e)
                for (int n = 0; n < nn; ++n) {
                    const double mj = s.ops.mass[n] * s.metrics.J(e, n);
                    const int at = (e * nn + n) * 2;
                    drift += mj * (dudt[at] + 2.0 * dudt[at + 1]);
                    scale += mj * (std::abs(dudt[at]) + 2.0 * std::abs(dudt[at + 1]));
                }
            CHECK(std::abs(drift) <= 1e-12 * std::max(1.0, scale));

            // convection alone: w^T MJ rhs telescopes to exactly zero
            RhsConfig bare;
            bare.enable_viscous = false;
            bare.enable_diss_c = false;
            bare.enable_diss_d = false;
            bare.enable_reaction = false;
            const SemidiscreteRhs rhs_bare(s.mesh, s.metrics, s.ops, model, bare);
            const LyapunovBalanceTerms terms = rhs_bare.assemble_rhs(st, dudt);
            const std::vector<double> w = w_of(model, st.u);
            double vscale = 0.0;
            for (int e = 0; e < s.mesh.n_elements; ++e)
                for (int n = 0; n < nn; ++n) {
                    const double mj = s.ops.mass[n] * s.metrics.J(e, n);
                    const int at = (e * nn + n) * 2;
                    vscale += mj * (std::abs(w[at] * dudt[at]) +
                                    std::abs(w[at + 1] * dudt[at + 1]));
                }
            CHECK(std::abs(terms.dVdt) <= 1e-12 * std::max(1.0, vscale));
            CHECK(terms.DT == 0.0);
            CHECK(terms.Xi == 0.0);
        }
    }
}

TEST_CASE("the Lyapunov ledger closes under every toggle combination") {
    const DimerizationModel model = desk_model({1.0, 0.5, 0.0}, 0.05, true);
    const Setup s = make_setup(2, 2, {2, 2, 1}, Box{{0.0, 0.0, 0.0}, {1.0, 2.0, 1.0}});

    for (int mask = 0; mask < 16; ++mask) {
        RhsConfig cfg;
        cfg.enable_viscous = mask & 1;
        cfg.enable_diss_c = mask & 2;
        cfg.enable_diss_d = mask & 4;
        cfg.enable_reaction = mask & 8;
        const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, cfg);
        const GlobalState st = random_state(s, 2, 70 + mask, 0.4);
        std::vector<double> dudt;
        const LyapunovBalanceTerms terms = rhs.assemble_rhs(st, dudt);

        CAPTURE(mask);
        const double maxterm = std::max({std::abs(terms.dVdt), std::abs(terms.Xi),
                                         std::abs(terms.DT), 1.0});
        CHECK(std::abs(terms.residual) <= 1e-12 * maxterm);
        CHECK(terms.DT >= -1e-13);
        CHECK(terms.Xi <= 1e-13);
        // dissipation only ever drains the functional
        CHECK(terms.dVdt <= 1e-12 * maxterm);
        if (!cfg.enable_reaction) CHECK(terms.Xi == 0.0);
    }

    // manufactured forcing enters the ledger as its own credit line
    const DimerParams params = model.params();
    RhsConfig cfg;
    cfg.mms_forcing = true;
    const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, cfg,
                              [params](int dim, const double* x, double t, double* out) {
                                  mms_forcing(params, dim, x, t, false, out);
                              });
    GlobalState st;
    st.t = 0.4;
    const int nn = s.ops.nodes_per_element;
    st.u.resize((size_t)s.mesh.n_elements * nn * 2);
    for (int e = 0; e < s.mesh.n_elements; ++e)
        for (int n = 0; n < nn; ++n)
            mms_solution(2, &s.metrics.coords[e][n * 2], st.t, false,
                         &st.u[(e * nn + n) * 2]);
    std::vector<double> dudt;
    const LyapunovBalanceTerms terms = rhs.assemble_rhs(st, dudt);
    CHECK(terms.forcing != 0.0);
    const double maxterm = std::max({std::abs(terms.dVdt), std::abs(terms.Xi),
                                     std::abs(terms.DT), std::abs(terms.forcing), 1.0});
    CHECK(std::abs(terms.residual) <= 1e-12 * maxterm);
}

TEST_CASE("inadmissible states abort assembly with their location") {
    const DimerizationModel model = desk_model();
    const Setup s = make_setup(2, 1, {2, 2, 1}, Box{});
    const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});

    GlobalState st = constant_state(s, 1.0, 1.0);
    const int nn = s.ops.nodes_per_element;
    st.u[(1 * nn + 2) * 2] = -0.5;
    std::vector<double> dudt;
    CHECK_THROWS_AS(rhs.assemble_rhs(st, dudt), AdmissibilityError);
    try {
        rhs.assemble_rhs(st, dudt);
    } catch (const AdmissibilityError& err) {
        CHECK(err.element == 1);
        CHECK(err.node == 2);
    }
}

TEST_CASE("construction and evaluation reject mismatched inputs") {
    const DimerizationModel model = desk_model();
    const Setup s = make_setup(1, 1, {2, 1, 1}, unit_jacobian_box(2));

    // operator set extended for the wrong component count
    const TensorOperatorSet ops1 = extend_tensor(build_sbp_d1(1), 1, 1);
    CHECK_THROWS_AS(SemidiscreteRhs(s.mesh, s.metrics, ops1, model, RhsConfig{}),
                    UsageError);

    // forcing requested but not supplied
    RhsConfig cfg;
    cfg.mms_forcing = true;
    CHECK_THROWS_AS(SemidiscreteRhs(s.mesh, s.metrics, s.ops, model, cfg), UsageError);

    // state length disagrees with the discretization
    const SemidiscreteRhs rhs(s.mesh, s.metrics, s.ops, model, RhsConfig{});
    GlobalState st = constant_state(s, 1.0, 1.0);
    st.u.pop_back();
    std::vector<double> dudt;
    CHECK_THROWS_AS(rhs.assemble_rhs(st, dudt), UsageError);
}
