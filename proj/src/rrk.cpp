#include "lyapdg/rrk.hpp"

#include "lyapdg/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace lyapdg {

namespace {

ButcherTableau make_heun() {
    ButcherTableau t;
    t.name = "heun";
    t.stages = 2;
    t.order = 2;
    t.embedded_order = 1;
    t.a = {0.0, 0.0,
           1.0, 0.0};
    t.b = {0.5, 0.5};
    t.c = {0.0, 1.0};
    t.b_hat = {1.0, 0.0};
    return t;
}

ButcherTableau make_bs3() {
    ButcherTableau t;
    t.name = "bs3";
    t.stages = 4;
    t.order = 3;
    t.embedded_order = 2;
    t.a = {0.0,       0.0,       0.0,       0.0,
           1.0 / 2.0, 0.0,       0.0,       0.0,
           0.0,       3.0 / 4.0, 0.0,       0.0,
           2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0};
    t.b = {2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0};
    t.c = {0.0, 1.0 / 2.0, 3.0 / 4.0, 1.0};
    t.b_hat = {7.0 / 24.0, 1.0 / 4.0, 1.0 / 3.0, 1.0 / 8.0};
    return t;
}

ButcherTableau make_rk4() {
    ButcherTableau t;
    t.name = "rk4";
    t.stages = 4;
    t.order = 4;
    t.embedded_order = 0;
    t.a = {0.0,       0.0,       0.0, 0.0,
           1.0 / 2.0, 0.0,       0.0, 0.0,
           0.0,       1.0 / 2.0, 0.0, 0.0,
           0.0,       0.0,       1.0, 0.0};
    t.b = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
    t.c = {0.0, 1.0 / 2.0, 1.0 / 2.0, 1.0};
    return t;
}

ButcherTableau make_bs5() {
    ButcherTableau t;
    t.name = "bs5";
    t.stages = 8;
    t.order = 5;
    t.embedded_order = 4;
    t.b = {587.0 / 8064.0,
           0.0,
           4440339.0 / 15491840.0,
           24353.0 / 124800.0,
           387.0 / 44800.0,
           2152.0 / 5985.0,
           7267.0 / 94080.0,
           0.0};
    t.c = {0.0, 1.0 / 6.0, 2.0 / 9.0, 3.0 / 7.0, 2.0 / 3.0, 3.0 / 4.0, 1.0, 1.0};
    t.b_hat = {2479.0 / 34992.0,
               0.0,
               123.0 / 416.0,
               612941.0 / 3411720.0,
               43.0 / 1440.0,
               2272.0 / 6561.0,
               79937.0 / 1113912.0,
               3293.0 / 556956.0};
    t.a.assign(64, 0.0);
    auto row = [&](int i, std::initializer_list<double> vals) {
        int j = 0;
        for (double v : vals) t.a[i * 8 + j++] = v;
    };
    row(1, {1.0 / 6.0});
    row(2, {2.0 / 27.0, 4.0 / 27.0});
    row(3, {183.0 / 1372.0, -162.0 / 343.0, 1053.0 / 1372.0});
    row(4, {68.0 / 297.0, -4.0 / 11.0, 42.0 / 143.0, 1960.0 / 3861.0});
    row(5, {597.0 / 22528.0, 81.0 / 352.0, 63099.0 / 585728.0, 58653.0 / 366080.0,
            4617.0 / 20480.0});
    row(6, {174197.0 / 959244.0, -30942.0 / 79937.0, 8152137.0 / 19744439.0,
            666106.0 / 1039181.0, -29421.0 / 29068.0, 482048.0 / 414219.0});
    // Last row equals b, so the final stage slope is the FSAL candidate.
    for (int j = 0; j < 8; ++j) t.a[7 * 8 + j] = t.b[j];
    return t;
}

} // namespace

ButcherTableau tableau_library(const std::string& name) {
    if (name == "heun") return make_heun();
    if (name == "bs3") return make_bs3();
    if (name == "rk4") return make_rk4();
    if (name == "bs5") return make_bs5();
    throw ConfigError("unknown tableau '" + name + "' (library has heun, bs3, rk4, bs5)");
}

ButcherTableau load_tableau(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tableau file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError("tableau file '" + path + "' is not valid JSON: " + err.what());
    }

    ButcherTableau t;
    try {
        t.name = j.value("name", path);
        t.b = j.at("b").get<std::vector<double>>();
        t.c = j.at("c").get<std::vector<double>>();
        t.order = j.at("order").get<int>();
        t.stages = j.value("stages", (int)t.b.size());
        if (j.contains("b_hat")) {
            t.b_hat = j.at("b_hat").get<std::vector<double>>();
            t.embedded_order = j.at("embedded_order").get<int>();
        }
        const auto& a = j.at("A");
        if (!a.is_array()) throw ConfigError("tableau 'A' must be an array");
        if (!a.empty() && a.front().is_array()) {
            for (const auto& arow : a) {
                auto vals = arow.get<std::vector<double>>();
                if ((int)vals.size() != t.stages)
                    throw ConfigError("tableau 'A' row length must equal the stage count");
                t.a.insert(t.a.end(), vals.begin(), vals.end());
            }
        } else {
            t.a = a.get<std::vector<double>>();
        }
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError("tableau file '" + path + "' is missing fields: " + err.what());
    }
    validate_tableau(t, false);
    return t;
}

void validate_tableau(const ButcherTableau& t, bool for_relaxation) {
    const int s = t.stages;
    if (s < 1) throw ConfigError("tableau '" + t.name + "' has no stages");
    if ((int)t.a.size() != s * s)
        throw ConfigError("tableau '" + t.name + "' needs a " + std::to_string(s) + "x" +
                          std::to_string(s) + " coefficient matrix");
    if ((int)t.b.size() != s || (int)t.c.size() != s)
        throw ConfigError("tableau '" + t.name + "' has mismatched b or c length");
    if (!t.b_hat.empty() && (int)t.b_hat.size() != s)
        throw ConfigError("tableau '" + t.name + "' has mismatched embedded weights");
    if (t.order < 1) throw ConfigError("tableau '" + t.name + "' must declare its order");
    if (t.has_embedded() && t.embedded_order < 1)
        throw ConfigError("tableau '" + t.name + "' must declare the embedded order");

    for (int i = 0; i < s; ++i)
        for (int j = i; j < s; ++j)
            if (t.A(i, j) != 0.0)
                throw ConfigError("tableau '" + t.name + "' is not explicit: A(" +
                                  std::to_string(i) + "," + std::to_string(j) + ") is nonzero");

    double bsum = 0.0;
    for (double bi : t.b) bsum += bi;
    if (std::abs(bsum - 1.0) > 1e-14)
        throw ConfigError("tableau '" + t.name + "' weights do not sum to one");
    if (t.has_embedded()) {
        double bhsum = 0.0;
        for (double bi : t.b_hat) bhsum += bi;
        if (std::abs(bhsum - 1.0) > 1e-14)
            throw ConfigError("tableau '" + t.name + "' embedded weights do not sum to one");
    }

    for (int i = 0; i < s; ++i) {
        double rsum = 0.0;
        for (int j = 0; j < s; ++j) rsum += t.A(i, j);
        if (std::abs(rsum - t.c[i]) > 1e-14)
            throw ConfigError("tableau '" + t.name + "' row " + std::to_string(i) +
                              " does not sum to its abscissa");
    }

    if (for_relaxation)
        for (int i = 0; i < s; ++i)
            if (t.b[i] < 0.0)
                throw ConfigError("tableau '" + t.name +
                                  "' has a negative weight, so the relaxation step can leave "
                                  "the stage hull; pick a tableau with b >= 0");
}

double order_condition_residual(const ButcherTableau& t, const std::vector<double>& w, int order) {
    if (order < 1 || order > 5)
        throw UsageError("order conditions are tabulated for orders 1 through 5");
    const int s = t.stages;
    if ((int)w.size() != s) throw UsageError("weight vector length must equal the stage count");

    auto amul = [&](const std::vector<double>& v) {
        std::vector<double> r(s, 0.0);
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < i; ++j) r[i] += t.A(i, j) * v[j];
        return r;
    };
    auto had = [&](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> r(s);
        for (int i = 0; i < s; ++i) r[i] = x[i] * y[i];
        return r;
    };
    auto phi = [&](const std::vector<double>& v) {
        double acc = 0.0;
        for (int i = 0; i < s; ++i) acc += w[i] * v[i];
        return acc;
    };

    const std::vector<double>& c = t.c;
    std::vector<double> one(s, 1.0);
    std::vector<double> c2 = had(c, c);
    std::vector<double> c3 = had(c2, c);
    std::vector<double> c4 = had(c2, c2);
    std::vector<double> ac = amul(c);
    std::vector<double> ac2 = amul(c2);
    std::vector<double> ac3 = amul(c3);
    std::vector<double> aac = amul(ac);
    std::vector<double> aac2 = amul(ac2);
    std::vector<double> aaac = amul(aac);
    std::vector<double> acac = amul(had(c, ac));

    // One rooted tree per row: elementary weight and its exact value.
    struct Cond {
        int order;
        double lhs;
        double rhs;
    };
    const Cond conds[] = {
        {1, phi(one), 1.0},
        {2, phi(c), 1.0 / 2.0},
        {3, phi(c2), 1.0 / 3.0},
        {3, phi(ac), 1.0 / 6.0},
        {4, phi(c3), 1.0 / 4.0},
        {4, phi(had(c, ac)), 1.0 / 8.0},
        {4, phi(ac2), 1.0 / 12.0},
        {4, phi(aac), 1.0 / 24.0},
        {5, phi(c4), 1.0 / 5.0},
        {5, phi(had(c2, ac)), 1.0 / 10.0},
        {5, phi(had(ac, ac)), 1.0 / 20.0},
        {5, phi(had(c, ac2)), 1.0 / 15.0},
        {5, phi(had(c, aac)), 1.0 / 30.0},
        {5, phi(ac3), 1.0 / 20.0},
        {5, phi(acac), 1.0 / 40.0},
        {5, phi(aac2), 1.0 / 60.0},
        {5, phi(aaac), 1.0 / 120.0},
    };

    double worst = 0.0;
    for (const Cond& cond : conds)
        if (cond.order <= order) worst = std::max(worst, std::abs(cond.lhs - cond.rhs));
    return worst;
}

RelaxationStep solve_gamma(const OdeSystem& sys, const std::vector<double>& un,
                           const std::vector<double>& d, double e, double dt, double v_old) {
    RelaxationStep rel;
    rel.e = e;

    double dmax = 0.0, umax = 0.0;
    for (size_t k = 0; k < un.size(); ++k) {
        dmax = std::max(dmax, std::abs(dt * d[k]));
        umax = std::max(umax, std::abs(un[k]));
    }
    // Near equilibrium the update direction vanishes and q is flat; any root
    // solve would just chase roundoff, so take the plain RK update.
    if (dmax <= 1e-14 * std::max(1.0, umax)) {
        rel.gamma = 1.0;
        rel.fallback = true;
        return rel;
    }

    std::vector<double> y(un.size());
    // Converge q down to the roundoff noise of a V difference; a looser cutoff
    // leaves a gamma error of tol / q'(root) that pollutes fine-step accuracy.
    const double tol =
        128.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v_old));
    auto qeval = [&](double g, bool& ok) {
        for (size_t k = 0; k < un.size(); ++k) y[k] = un[k] + g * dt * d[k];
        try {
            double q = sys.functional(y) - v_old - g * e;
            ok = true;
            return q;
        } catch (const AdmissibilityError&) {
            ok = false;
            return 0.0;
        }
    };

    // Once the relaxation correction drops below the roundoff noise of a V
    // difference, q is pure noise across any bracket and the root solve would
    // return garbage. gamma = 1 then satisfies the relaxation equation to
    // machine precision, which is the best any root could do.
    const double qnoise =
        512.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v_old));
    bool ok1 = false;
    const double q1 = qeval(1.0, ok1);
    if (ok1 && std::abs(q1) <= qnoise) {
        rel.gamma = 1.0;
        rel.fallback = true;
        return rel;
    }

    // q is convex with q(0) = 0, so it is negative between 0 and the positive
    // root we want. Walk lo down until q(lo) <= 0, then push hi up (or pull it
    // back toward lo when the trial state is inadmissible) until q(hi) >= 0.
    double lo = 0.5, hi = 2.0;
    bool ok = false;
    double qlo = qeval(lo, ok);
    int guard = 0;
    while ((!ok || qlo > 0.0) && lo > 1e-3 && ++guard <= 60) {
        lo *= 0.5;
        qlo = qeval(lo, ok);
    }
    if (!ok)
        throw RelaxationError("relaxation: trial states are inadmissible arbitrarily close to "
                              "the current state");
    if (qlo > 0.0)
        throw RelaxationError("relaxation: no sign change in [1e-3, 10], cannot bracket the root");

    double qhi = qeval(hi, ok);
    guard = 0;
    while (++guard <= 60) {
        if (ok && qhi >= 0.0) break;
        if (!ok) {
            hi = 0.5 * (lo + hi);
        } else {
            lo = hi;
            qlo = qhi;
            double next = std::min(10.0, hi * 2.0);
            if (next == hi) break;
            hi = next;
        }
        qhi = qeval(hi, ok);
    }
    if (!ok || qhi < 0.0)
        throw RelaxationError("relaxation: no admissible bracket in [1e-3, 10]");

    // Safeguarded false position on [lo, hi] with the Illinois rule: when the
    // same endpoint survives two updates in a row its stored value is halved,
    // which unpins the anchored end and restores superlinear convergence.
    // Accepted iterates always carry true q values; the halved copies only
    // steer the interpolation. Bisection takes over whenever the interpolated
    // step leaves the bracket or lands on an inadmissible state.
    double g = hi, qg = qhi;
    bool bisect_only = false;
    int side = 0;
    int it = 0;
    while (it < 100) {
        ++it;
        double gs;
        if (bisect_only || qhi == qlo) {
            gs = 0.5 * (lo + hi);
        } else {
            gs = hi - qhi * (hi - lo) / (qhi - qlo);
            if (!(gs > lo && gs < hi)) gs = 0.5 * (lo + hi);
        }
        bool oks = false;
        double qs = qeval(gs, oks);
        if (!oks) {
            hi = gs;
            bisect_only = true;
            continue;
        }
        g = gs;
        qg = qs;
        if (std::abs(qg) <= tol) break;
        if (qg < 0.0) {
            if (side < 0) qhi *= 0.5;
            lo = gs;
            qlo = qs;
            side = -1;
        } else {
            if (side > 0) qlo *= 0.5;
            hi = gs;
            qhi = qs;
            side = 1;
        }
        if (hi - lo <= 1e-15 * hi) break;
    }
    if (std::abs(qg) > tol)
        throw RelaxationError("relaxation: root solve stalled with residual " +
                              std::to_string(qg));
    if (!(g > 0.0 && g <= 10.0))
        throw RelaxationError("relaxation: root " + std::to_string(g) + " is outside (0, 10]");

    rel.gamma = g;
    rel.q_residual = std::abs(qg);
    rel.iterations = it;
    return rel;
}

RrkStepper::RrkStepper(const OdeSystem& sys, const ButcherTableau& tab, bool relaxation)
    : sys_(sys), tab_(tab), relaxation_(relaxation) {
    if (sys.dim < 1) throw UsageError("ode system dimension must be positive");
    if (!sys.rhs) throw UsageError("ode system has no right-hand side");
    if (relaxation && !sys.functional)
        throw UsageError("relaxation needs the system's convex functional");
    validate_tableau(tab_, relaxation_);
    f_.assign(tab_.stages, std::vector<double>(sys.dim));
    inner_.assign(tab_.stages, 0.0);
    ywork_.resize(sys.dim);
    d_.resize(sys.dim);
    ubase_.resize(sys.dim);
}

void RrkStepper::compute_stages(double t, double dt, const std::vector<double>& u) {
    if ((int)u.size() != sys_.dim) throw UsageError("state size does not match the ode system");
    t_ = t;
    dt_ = dt;
    const int s = tab_.stages;
    for (int i = 0; i < s; ++i) {
        ywork_ = u;
        for (int j = 0; j < i; ++j) {
            const double aij = tab_.A(i, j);
            if (aij == 0.0) continue;
            const double w = dt * aij;
            const std::vector<double>& fj = f_[j];
            for (int k = 0; k < sys_.dim; ++k) ywork_[k] += w * fj[k];
        }
        inner_[i] = sys_.rhs(t + tab_.c[i] * dt, ywork_, f_[i]);
    }

    std::fill(d_.begin(), d_.end(), 0.0);
    e_ = 0.0;
    for (int i = 0; i < s; ++i) {
        const double bi = tab_.b[i];
        if (bi == 0.0) continue;
        e_ += bi * inner_[i];
        const std::vector<double>& fi = f_[i];
        for (int k = 0; k < sys_.dim; ++k) d_[k] += bi * fi[k];
    }
    e_ *= dt;
    for (int k = 0; k < sys_.dim; ++k) ubase_[k] = u[k] + dt * d_[k];
}

double RrkStepper::error_estimate(const std::vector<double>& u, double atol, double rtol) const {
    if (!tab_.has_embedded())
        throw UsageError("tableau '" + tab_.name + "' has no embedded weights");
    double acc = 0.0;
    for (int k = 0; k < sys_.dim; ++k) {
        double err = 0.0;
        for (int i = 0; i < tab_.stages; ++i) {
            const double db = tab_.b[i] - tab_.b_hat[i];
            if (db != 0.0) err += db * f_[i][k];
        }
        err *= dt_;
        const double scale = atol + rtol * std::max(std::abs(u[k]), std::abs(ubase_[k]));
        acc += (err / scale) * (err / scale);
    }
    return std::sqrt(acc / sys_.dim);
}

RelaxationStep RrkStepper::relax(const std::vector<double>& u) {
    if (!relaxation_) {
        RelaxationStep rel;
        rel.e = e_;
        return rel;
    }
    return solve_gamma(sys_, u, d_, e_, dt_, sys_.functional(u));
}

void RrkStepper::commit(double& t, std::vector<double>& u, const RelaxationStep& rel) const {
    const double w = rel.gamma * dt_;
    for (int k = 0; k < sys_.dim; ++k) u[k] += w * d_[k];
    t = t_ + w;
}

RelaxationStep RrkStepper::step(double& t, double dt, std::vector<double>& u) {
    compute_stages(t, dt, u);
    RelaxationStep rel = relax(u);
    commit(t, u, rel);
    return rel;
}

IntegrationStats fixed_advance(const OdeSystem& sys, const ButcherTableau& tab, double t0,
                               double t_end, double dt, std::vector<double>& u, bool relaxation,
                               const StepObserver& observer) {
    if (dt <= 0.0) throw ConfigError("fixed step size must be positive");
    if (t_end < t0) throw ConfigError("t_end must not precede t0");
    RrkStepper stepper(sys, tab, relaxation);
    IntegrationStats stats;
    double t = t0;
    double gamma_est = 1.0;
    const double snap = 1e-11 * std::max(1.0, std::abs(t_end));
    int terminal_attempts = 0;

    while (t_end - t > snap) {
        const double rem = t_end - t;
        const double dt_try = std::min(dt, rem / gamma_est);
        RelaxationStep rel;
        try {
            stepper.compute_stages(t, dt_try, u);
            rel = stepper.relax(u);
        } catch (const AdmissibilityError& err) {
            throw IntegrationError(std::string("fixed-step integration hit an inadmissible "
                                               "state: ") +
                                       err.what(),
                                   t, dt_try);
        }
        const double t_new = t + rel.gamma * dt_try;
        if (t_new > t_end + snap && terminal_attempts < 8) {
            // Relaxation stretched the step past t_end; retry shorter. The
            // bias keeps roundoff from producing the same overshoot again.
            ++terminal_attempts;
            gamma_est = rel.gamma * (1.0 + 1e-9);
            continue;
        }
        stepper.commit(t, u, rel);
        ++stats.accepted;
        if (rel.fallback) ++stats.relaxation_fallbacks;
        stats.last_dt = dt_try;
        if (std::abs(t - t_end) <= snap) t = t_end;
        if (observer) observer(t, dt_try, rel, u);
        gamma_est = std::clamp(rel.gamma, 0.1, 10.0);
        terminal_attempts = 0;
    }
    if (std::abs(t - t_end) <= snap) t = t_end;
    stats.final_t = t;
    return stats;
}

IntegrationStats adaptive_advance(const OdeSystem& sys, const ButcherTableau& tab,
                                  StepController ctl, double t0, double t_end,
                                  std::vector<double>& u, bool relaxation,
                                  const StepObserver& observer) {
    if (!tab.has_embedded())
        throw ConfigError("adaptive stepping needs a tableau with embedded weights");
    if (ctl.dt <= 0.0) throw ConfigError("initial step size must be positive");
    if (t_end < t0) throw ConfigError("t_end must not precede t0");

    RrkStepper stepper(sys, tab, relaxation);
    IntegrationStats stats;
    double t = t0;
    double dt = std::min(ctl.dt, ctl.dt_max);
    double est_prev = 1.0;
    double gamma_est = 1.0;
    const int k = tab.embedded_order + 1;
    const double snap = 1e-11 * std::max(1.0, std::abs(t_end));
    int terminal_attempts = 0;

    while (t_end - t > snap) {
        const double rem = t_end - t;
        const double dt_try = std::min(dt, rem / gamma_est);
        if (dt_try < ctl.dt_min)
            throw IntegrationError("step size underflow", t, dt_try);

        try {
            stepper.compute_stages(t, dt_try, u);
        } catch (const AdmissibilityError&) {
            ++stats.rejected_admissibility;
            dt = 0.5 * dt_try;
            continue;
        }

        const double est = stepper.error_estimate(u, ctl.atol, ctl.rtol);
        if (!std::isfinite(est) || est > 1.0) {
            ++stats.rejected_error;
            dt = std::isfinite(est)
                     ? dt_try * std::max(0.1, ctl.safety * std::pow(est, -1.0 / k))
                     : 0.5 * dt_try;
            if (dt < ctl.dt_min)
                throw IntegrationError("step size underflow after error rejection", t, dt);
            continue;
        }

        RelaxationStep rel;
        try {
            rel = stepper.relax(u);
            // Without relaxation nothing has probed the committed state yet;
            // let the functional veto it if the model tracks admissibility.
            if (!relaxation && sys.functional) sys.functional(stepper.base_update());
        } catch (const AdmissibilityError&) {
            ++stats.rejected_admissibility;
            dt = 0.5 * dt_try;
            continue;
        } catch (const RelaxationError&) {
            ++stats.rejected_admissibility;
            dt = 0.5 * dt_try;
            continue;
        }

        const double t_new = t + rel.gamma * dt_try;
        if (t_new > t_end + snap && terminal_attempts < 8) {
            // Relaxation stretched the step past t_end; retry shorter with
            // a slight bias so roundoff cannot reproduce the overshoot.
            ++terminal_attempts;
            gamma_est = rel.gamma * (1.0 + 1e-9);
            continue;
        }

        stepper.commit(t, u, rel);
        ++stats.accepted;
        if (rel.fallback) ++stats.relaxation_fallbacks;
        stats.last_dt = dt_try;
        if (std::abs(t - t_end) <= snap) t = t_end;
        if (observer) observer(t, dt_try, rel, u);

        const double est_eff = std::max(est, 1e-16);
        double fac = ctl.safety * std::pow(est_eff, -0.7 / k) * std::pow(est_prev, 0.4 / k);
        fac = std::clamp(fac, 0.2, 5.0);
        dt = std::clamp(dt_try * fac, ctl.dt_min, ctl.dt_max);
        est_prev = est_eff;
        gamma_est = std::clamp(rel.gamma, 0.1, 10.0);
        terminal_attempts = 0;
    }
    if (std::abs(t - t_end) <= snap) t = t_end;
    stats.final_t = t;
    stats.last_dt = stats.accepted > 0 ? stats.last_dt : dt;
    return stats;
}

} // namespace lyapdg
