#include "lyapdg/diagnostics.hpp"

#include "lyapdg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace lyapdg {

ErrorNorms error_norms(const TensorOperatorSet& ops, const MetricData& metrics,
                       const std::vector<double>& u, const std::vector<double>& u_ref) {
    if (u.size() != u_ref.size()) throw UsageError("error_norms: state sizes differ");
    const int r = ops.r;
    const int nn = ops.nodes_per_element;
    const int ne = (int)metrics.jac.size();
    if ((int)u.size() != ne * nn * r)
        throw UsageError("error_norms: state size does not match mesh and operators");

    ErrorNorms out;
    out.l1.assign(r, 0.0);
    out.l2.assign(r, 0.0);
    out.linf.assign(r, 0.0);

    double omega = 0.0;
    for (int e = 0; e < ne; ++e) {
        for (int n = 0; n < nn; ++n) {
            const double mj = ops.mass[n] * metrics.J(e, n);
            omega += mj;
            const int base = (e * nn + n) * r;
            for (int c = 0; c < r; ++c) {
                const double err = u[base + c] - u_ref[base + c];
                out.l1[c] += mj * std::abs(err);
                out.l2[c] += mj * err * err;
                out.linf[c] = std::max(out.linf[c], std::abs(err));
            }
        }
    }
    for (int c = 0; c < r; ++c) {
        out.l1[c] /= omega;
        out.l2[c] = std::sqrt(out.l2[c] / omega);
        out.l1_total += out.l1[c];
        out.l2_total += out.l2[c] * out.l2[c];
        out.linf_total = std::max(out.linf_total, out.linf[c]);
    }
    out.l2_total = std::sqrt(out.l2_total);
    return out;
}

double lyapunov_functional(const TensorOperatorSet& ops, const MetricData& metrics,
                           const ModelContract& model, const std::vector<double>& u) {
    const int r = model.components();
    const int nn = ops.nodes_per_element;
    const int ne = (int)metrics.jac.size();
    if ((int)u.size() != ne * nn * r)
        throw UsageError("lyapunov_functional: state size does not match mesh");

    double acc = 0.0;
    for (int e = 0; e < ne; ++e) {
        for (int n = 0; n < nn; ++n) {
            const double* un = u.data() + (e * nn + n) * r;
            if (!model.admissible(un))
                throw AdmissibilityError("state left the admissible set", e, n);
            acc += ops.mass[n] * metrics.J(e, n) * model.lyapunov_V(un);
        }
    }
    return acc;
}

BalanceRow balance_sample(double t, const LyapunovBalanceTerms& terms, double gamma,
                          double dt, const TensorOperatorSet& ops,
                          const MetricData& metrics, const ModelContract& model,
                          const std::vector<double>& u) {
    BalanceRow row;
    row.t = t;
    row.V = lyapunov_functional(ops, metrics, model, u);
    row.dVdt = terms.dVdt;
    row.Xi = terms.Xi;
    row.DT = terms.DT;
    row.forcing = terms.forcing;
    row.residual = terms.residual;
    row.gamma = gamma;
    row.dt = dt;

    const int r = model.components();
    const std::vector<double>& eq = model.equilibrium();
    row.dist.assign(r, 0.0);
    for (size_t i = 0; i < u.size(); i += r)
        for (int c = 0; c < r; ++c)
            row.dist[c] = std::max(row.dist[c], std::abs(u[i + c] - eq[c]));
    return row;
}

std::string balance_series_csv(const BalanceSeries& series) {
    std::string out = "t,V,dVdt,Xi,DT,forcing,residual,gamma,dt";
    for (const std::string& name : series.component_names) out += ",dist_" + name;
    out += "\n";

    char buf[32];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.16e%c", v, sep);
        out += buf;
    };
    for (const BalanceRow& row : series.rows) {
        put(row.t, ',');
        put(row.V, ',');
        put(row.dVdt, ',');
        put(row.Xi, ',');
        put(row.DT, ',');
        put(row.forcing, ',');
        put(row.residual, ',');
        put(row.gamma, ',');
        put(row.dt, row.dist.empty() ? '\n' : ',');
        for (size_t c = 0; c < row.dist.size(); ++c)
            put(row.dist[c], c + 1 == row.dist.size() ? '\n' : ',');
    }
    return out;
}

void write_balance_series_csv(const BalanceSeries& series, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot open '" + path + "' for writing");
    out << balance_series_csv(series);
}

std::vector<double> convergence_rates(const std::vector<double>& h,
                                      const std::vector<double>& err) {
    if (h.size() != err.size()) throw UsageError("convergence_rates: length mismatch");
    if (h.size() < 2) throw UsageError("convergence_rates: need at least two levels");
    std::vector<double> rates(h.size() - 1);
    for (size_t k = 0; k + 1 < h.size(); ++k) {
        if (!(h[k] > h[k + 1]))
            throw UsageError("convergence_rates: h must decrease between levels");
        if (err[k] <= 0.0 || err[k + 1] <= 0.0)
            rates[k] = std::numeric_limits<double>::quiet_NaN();
        else
            rates[k] = std::log(err[k] / err[k + 1]) / std::log(h[k] / h[k + 1]);
    }
    return rates;
}

std::optional<double> equilibrium_tracking(const BalanceSeries& series, double threshold) {
    if (threshold <= 0.0) throw UsageError("equilibrium_tracking: threshold must be positive");
    auto dist = [](const BalanceRow& row) {
        double d = 0.0;
        for (double v : row.dist) d = std::max(d, v);
        return d;
    };
    double prev_d = 0.0, prev_t = 0.0;
    for (size_t i = 0; i < series.rows.size(); ++i) {
        const double d = dist(series.rows[i]);
        const double t = series.rows[i].t;
        if (d <= threshold) {
            if (i == 0) return t;
            // Crossed between samples; place the hit on the chord.
            const double frac = (prev_d - threshold) / (prev_d - d);
            return prev_t + frac * (t - prev_t);
        }
        prev_d = d;
        prev_t = t;
    }
    return std::nullopt;
}

} // namespace lyapdg
