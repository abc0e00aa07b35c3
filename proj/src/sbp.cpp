#include "lyapdg/sbp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lyapdg/errors.hpp"

namespace lyapdg {

namespace {

// Legendre P_p(x) and P'_p(x) by the three-term recurrence.
void legendre(int p, double x, double& value, double& deriv) {
    double pm1 = 1.0, pm0 = x;
    double dm1 = 0.0, dm0 = 1.0;
    if (p == 0) { value = pm1; deriv = dm1; return; }
    for (int k = 2; k <= p; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * pm0 - (k - 1.0) * pm1) / k;
        const double dk = dm1 + (2.0 * k - 1.0) * pm0;
        pm1 = pm0; pm0 = pk;
        dm1 = dm0; dm0 = dk;
    }
    value = pm0;
    deriv = dm0;
}

} // namespace

void build_lgl_nodes(int p, std::vector<double>& nodes, std::vector<double>& weights) {
    if (p < 1 || p > 12)
        throw ConfigError("LGL degree p must lie in [1,12], got " + std::to_string(p));
    const int n = p + 1;
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;

    // Interior nodes: roots of P'_p via Newton, seeded with Chebyshev-Lobatto
    // points. P''_p comes from the Legendre ODE (1-x^2)P'' = 2xP' - p(p+1)P.
    for (int i = 1; i <= p - 1; ++i) {
        double x = -std::cos(M_PI * i / p);
        for (int it = 0; it < 100; ++it) {
            double v, d;
            legendre(p, x, v, d);
            const double d2 = (2.0 * x * d - p * (p + 1.0) * v) / (1.0 - x * x);
            const double dx = d / d2;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = x;
    }
    // Symmetrize so paired nodes are exact negatives (polishes the last ulp).
    for (int i = 1; i <= p - 1; ++i) {
        const int j = n - 1 - i;
        if (i < j) {
            const double m = 0.5 * (nodes[j] - nodes[i]);
            nodes[i] = -m;
            nodes[j] = m;
        } else if (i == j) {
            nodes[i] = 0.0;
        }
    }

    // w_i = 2 / (p(p+1) P_p(x_i)^2), endpoints included.
    for (int i = 0; i < n; ++i) {
        double v, d;
        legendre(p, nodes[i], v, d);
        weights[i] = 2.0 / (p * (p + 1.0) * v * v);
    }
}

SbpOperator1D build_sbp_d1(int p) {
    SbpOperator1D op;
    op.p = p;
    build_lgl_nodes(p, op.nodes, op.weights);
    op.n = p + 1;
    const int n = op.n;
    op.d.assign(n * n, 0.0);
    op.q.assign(n * n, 0.0);

    // Lagrange collocation derivative via barycentric weights.
    std::vector<double> lambda(n, 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) lambda[i] /= (op.nodes[i] - op.nodes[j]);
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dij = (lambda[j] / lambda[i]) / (op.nodes[i] - op.nodes[j]);
            op.d[i * n + j] = dij;
            diag -= dij;
        }
        op.d[i * n + i] = diag; // rows sum to zero: constants are annihilated
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            op.q[i * n + j] = op.weights[i] * op.d[i * n + j];
    return op;
}

SbpVerification verify_sbp(const SbpOperator1D& op) {
    SbpVerification rep;
    const int n = op.n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            rep.qqt_residual = std::max(rep.qqt_residual,
                std::abs(op.Q(i, j) + op.Q(j, i) - op.E(i, j)));
            rep.dh_consistency = std::max(rep.dh_consistency,
                std::abs(op.weights[i] * op.D(i, j) - op.Q(i, j)));
        }

    // D xi^k = k xi^(k-1) for k = 0..p.
    for (int k = 0; k <= op.p; ++k) {
        for (int i = 0; i < n; ++i) {
            double der = 0.0;
            for (int j = 0; j < n; ++j)
                der += op.D(i, j) * std::pow(op.nodes[j], k);
            const double exact = (k == 0) ? 0.0 : k * std::pow(op.nodes[i], k - 1);
            rep.accuracy_residual = std::max(rep.accuracy_residual, std::abs(der - exact));
        }
    }

    // Quadrature exact for monomials of degree <= 2p-1.
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) wsum += op.weights[i];
    rep.weight_sum_residual = std::abs(wsum - 2.0);
    for (int k = 0; k <= 2 * op.p - 1; ++k) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += op.weights[i] * std::pow(op.nodes[i], k);
        const double exact = (k % 2 == 0) ? 2.0 / (k + 1.0) : 0.0;
        rep.quadrature_residual = std::max(rep.quadrature_residual, std::abs(s - exact));
    }

    rep.endpoint_residual = std::max(std::abs(op.nodes[0] + 1.0),
                                     std::abs(op.nodes[n - 1] - 1.0));
    rep.pass = rep.qqt_residual <= rep.tolerance &&
               rep.accuracy_residual <= rep.tolerance &&
               rep.quadrature_residual <= rep.tolerance &&
               rep.weight_sum_residual <= rep.tolerance &&
               rep.dh_consistency <= rep.tolerance &&
               rep.endpoint_residual <= rep.tolerance;
    return rep;
}

std::string SbpVerification::summary() const {
    std::ostringstream os;
    os << (pass ? "pass" : "FAIL")
       << " qqt=" << qqt_residual
       << " accuracy=" << accuracy_residual
       << " quadrature=" << quadrature_residual
       << " weight_sum=" << weight_sum_residual
       << " dh=" << dh_consistency
       << " endpoints=" << endpoint_residual;
    return os.str();
}

TensorOperatorSet extend_tensor(const SbpOperator1D& op, int dim, int r) {
    if (dim < 1 || dim > 3)
        throw ConfigError("tensor extension supports dim in {1,2,3}, got " + std::to_string(dim));
    if (r < 1)
        throw ConfigError("component count must be >= 1, got " + std::to_string(r));

    TensorOperatorSet t;
    t.dim = dim;
    t.r = r;
    t.op1d = op;
    t.n1d = op.n;
    t.nodes_per_element = 1;
    for (int i = 0; i < dim; ++i) t.nodes_per_element *= op.n;
    t.stride = {1, op.n, op.n * op.n};
    for (int i = dim; i < 3; ++i) t.stride[i] = 0;

    const int n1 = op.n;
    const int nn = t.nodes_per_element;

    auto coords_of = [&](int node) {
        std::array<int, 3> q{0, 0, 0};
        q[0] = node % n1;
        if (dim > 1) q[1] = (node / n1) % n1;
        if (dim > 2) q[2] = node / (n1 * n1);
        return q;
    };

    t.mass.assign(nn, 1.0);
    for (int node = 0; node < nn; ++node) {
        const auto q = coords_of(node);
        for (int i = 0; i < dim; ++i) t.mass[node] *= op.weights[q[i]];
    }

    for (int direction = 0; direction < dim; ++direction) {
        // Tensor lines: all nodes with q[direction] = 0 serve as bases.
        auto& bases = t.line_base[direction];
        for (int node = 0; node < nn; ++node)
            if (coords_of(node)[direction] == 0) bases.push_back(node);

        for (int side = 0; side < 2; ++side) {
            FaceDescriptor f;
            f.direction = direction;
            f.side = side;
            const int edge = side == 0 ? 0 : n1 - 1;
            for (int node = 0; node < nn; ++node) {
                const auto q = coords_of(node);
                if (q[direction] != edge) continue;
                f.volume_nodes.push_back(node);
                double pp = 1.0;
                for (int i = 0; i < dim; ++i)
                    if (i != direction) pp *= op.weights[q[i]];
                f.p_perp.push_back(pp);
            }
            t.faces.push_back(std::move(f));
        }
    }
    return t;
}

void TensorOperatorSet::apply_d(int direction, const double* x, double* y, int ncomp) const {
    const int n1 = n1d;
    const int str = stride[direction];
    const int rc = ncomp < 0 ? r : ncomp;
    const double* dmat = op1d.d.data();
    for (const int base : line_base[direction]) {
        for (int a = 0; a < n1; ++a) {
            double* out = y + (base + a * str) * rc;
            const double* drow = dmat + a * n1;
            for (int c = 0; c < rc; ++c) out[c] = 0.0;
            for (int b = 0; b < n1; ++b) {
                const double dab = drow[b];
                const double* in = x + (base + b * str) * rc;
                for (int c = 0; c < rc; ++c) out[c] += dab * in[c];
            }
        }
    }
}

std::string dump_operator_text(const SbpOperator1D& op) {
    std::ostringstream os;
    char buf[64];
    auto row = [&](const char* name, const double* v, int count) {
        os << name;
        for (int i = 0; i < count; ++i) {
            std::snprintf(buf, sizeof buf, " %.17g", v[i]);
            os << buf;
        }
        os << "\n";
    };
    os << "p " << op.p << "\nn " << op.n << "\n";
    row("nodes", op.nodes.data(), op.n);
    row("weights", op.weights.data(), op.n);
    for (int i = 0; i < op.n; ++i) row("D", op.d.data() + i * op.n, op.n);
    for (int i = 0; i < op.n; ++i) row("Q", op.q.data() + i * op.n, op.n);
    return os.str();
}

} // namespace lyapdg
