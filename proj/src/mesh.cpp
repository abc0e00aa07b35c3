#include "lyapdg/mesh.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "lyapdg/errors.hpp"

namespace lyapdg {

int MeshGeometry::neighbor(int id, int direction, int side) const {
    auto e = element_coords(id);
    int& c = e[direction];
    c += (side == 1) ? 1 : -1;
    if (c < 0) c += k[direction];
    if (c >= k[direction]) c -= k[direction];
    return element_id(e);
}

MeshGeometry build_box_mesh(int dim, const std::array<int, 3>& k, const Box& box) {
    if (dim < 1 || dim > 3)
        throw ConfigError("mesh dim must be 1, 2 or 3, got " + std::to_string(dim));
    MeshGeometry mesh;
    mesh.dim = dim;
    mesh.box = box;
    mesh.n_elements = 1;
    for (int i = 0; i < 3; ++i) {
        mesh.k[i] = (i < dim) ? k[i] : 1;
        if (i < dim) {
            if (mesh.k[i] < 1)
                throw ConfigError("elements per direction must be >= 1, got " +
                                  std::to_string(mesh.k[i]));
            if (!(box.hi[i] > box.lo[i]))
                throw ConfigError("degenerate box in direction " + std::to_string(i));
            mesh.n_elements *= mesh.k[i];
        }
    }
    // Each element owns its max face per direction; with periodic wrapping
    // this enumerates every shared face exactly once (K=1 self-couples).
    for (int e = 0; e < mesh.n_elements; ++e)
        for (int d = 0; d < dim; ++d)
            mesh.interfaces.push_back({e, mesh.neighbor(e, d, 1), d});
    return mesh;
}

ElementCoords apply_mapping(const MeshGeometry& mesh, const Mapping& mapping,
                            const TensorOperatorSet& ops) {
    const int dim = mesh.dim;
    if (mapping.kind == MappingKind::smooth_warp_2d) {
        if (dim != 2)
            throw ConfigError("smooth_warp_2d mapping requires dim = 2");
        if (std::abs(mapping.alpha) > 0.1)
            throw ConfigError("warp amplitude exceeds 0.1; the map is not guaranteed invertible");
        // The warp displacement sin(pi x1) sin(pi x2) has period 2 in each
        // coordinate. Wrap-around faces only match if each side length is an
        // even integer; anything else tears the periodic identification.
        for (int i = 0; i < dim; ++i) {
            const double len = mesh.box.hi[i] - mesh.box.lo[i];
            const double half = len / 2.0;
            if (std::abs(half - std::round(half)) > 1e-12)
                throw ConfigError("smooth_warp_2d on a periodic box needs even integer side lengths");
        }
    }

    const auto widths = mesh.element_widths();
    const int nn = ops.nodes_per_element;
    const int n1 = ops.n1d;

    ElementCoords coords(mesh.n_elements, std::vector<double>(nn * dim, 0.0));
    for (int e = 0; e < mesh.n_elements; ++e) {
        const auto ec = mesh.element_coords(e);
        for (int node = 0; node < nn; ++node) {
            std::array<int, 3> q{0, 0, 0};
            q[0] = node % n1;
            if (dim > 1) q[1] = (node / n1) % n1;
            if (dim > 2) q[2] = node / (n1 * n1);
            std::array<double, 3> x{0.0, 0.0, 0.0};
            for (int l = 0; l < dim; ++l)
                x[l] = mesh.box.lo[l] + widths[l] * (ec[l] + 0.5 * (ops.op1d.nodes[q[l]] + 1.0));
            if (mapping.kind == MappingKind::smooth_warp_2d) {
                const double bump = mapping.alpha * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]);
                x[0] += bump;
                x[1] += bump;
            }
            for (int l = 0; l < dim; ++l) coords[e][node * dim + l] = x[l];
        }
    }
    return coords;
}

namespace {

// xl_xi[i][l*nn + n] = discrete d x_l / d xi_i at node n.
void coordinate_derivatives(const std::vector<double>& xe, int dim,
                            const TensorOperatorSet& ops,
                            std::array<std::vector<double>, 3>& xl_xi) {
    const int nn = ops.nodes_per_element;
    std::vector<double> dx(nn * dim);
    for (int i = 0; i < dim; ++i) {
        ops.apply_d(i, xe.data(), dx.data(), dim);
        xl_xi[i].assign(nn * dim, 0.0);
        for (int node = 0; node < nn; ++node)
            for (int l = 0; l < dim; ++l)
                xl_xi[i][l * nn + node] = dx[node * dim + l];
    }
}

} // namespace

MetricData compute_metrics(const MeshGeometry& mesh, const ElementCoords& coords,
                           const TensorOperatorSet& ops) {
    const int dim = mesh.dim;
    const int nn = ops.nodes_per_element;
    if (ops.dim != dim)
        throw UsageError("compute_metrics needs a TensorOperatorSet built for mesh.dim");

    MetricData m;
    m.dim = dim;
    m.nn = nn;
    m.coords = coords;
    m.jac.assign(mesh.n_elements, std::vector<double>(nn, 0.0));
    m.ja.assign(mesh.n_elements, std::vector<double>(dim * dim * nn, 0.0));
    m.gmat.assign(mesh.n_elements, std::vector<double>(dim * dim * nn, 0.0));

    std::array<std::vector<double>, 3> a; // a[i][l*nn+n] = d x_l / d xi_i
    for (int e = 0; e < mesh.n_elements; ++e) {
        coordinate_derivatives(coords[e], dim, ops, a);
        auto& ja = m.ja[e];
        auto& jac = m.jac[e];
        if (dim == 1) {
            for (int n = 0; n < nn; ++n) {
                ja[n] = 1.0;
                jac[n] = a[0][n];
            }
        } else if (dim == 2) {
            // Cofactors of the 2x2 Jacobian; built from the same discrete
            // derivatives that enter the divergence, so GCL is exact.
            for (int n = 0; n < nn; ++n) {
                ja[(0 * dim + 0) * nn + n] = a[1][1 * nn + n];  //  y_xi2
                ja[(0 * dim + 1) * nn + n] = -a[1][0 * nn + n]; // -x_xi2
                ja[(1 * dim + 0) * nn + n] = -a[0][1 * nn + n]; // -y_xi1
                ja[(1 * dim + 1) * nn + n] = a[0][0 * nn + n];  //  x_xi1
                jac[n] = a[0][0 * nn + n] * a[1][1 * nn + n] -
                         a[0][1 * nn + n] * a[1][0 * nn + n];
            }
        } else {
            // Cross-product (cofactor) form with cyclic index shifts. Exact
            // for affine maps; curved 3D maps would need a curl form instead
            // and are rejected at configuration time.
            for (int n = 0; n < nn; ++n) {
                for (int i = 0; i < 3; ++i) {
                    const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
                    for (int l = 0; l < 3; ++l) {
                        const int l1 = (l + 1) % 3, l2 = (l + 2) % 3;
                        ja[(i * dim + l) * nn + n] =
                            a[i1][l1 * nn + n] * a[i2][l2 * nn + n] -
                            a[i1][l2 * nn + n] * a[i2][l1 * nn + n];
                    }
                }
                jac[n] = 0.0;
                for (int i = 0; i < 3; ++i)
                    jac[n] += a[0][i * nn + n] * ja[(i * dim + 0) * nn + n];
                // J = sum_i x_xi1,i * Ja_i0 expands the determinant along row 1.
            }
        }
        for (int n = 0; n < nn; ++n)
            if (!(jac[n] > 0.0))
                throw GeometryError("nonpositive metric Jacobian " + std::to_string(jac[n]),
                                    e, n);
        auto& g = m.gmat[e];
        for (int n = 0; n < nn; ++n)
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < dim; ++l)
                        s += ja[(i * dim + l) * nn + n] * ja[(j * dim + l) * nn + n];
                    g[(i * dim + j) * nn + n] = s / jac[n];
                }
    }

    // Face-averaged normal metric terms, one block per interface. Conforming
    // tensor meshes pair face node j with face node j; the agreement residual
    // records how far the two sides' metric terms actually are from equal.
    const int nf = nn / ops.n1d;
    m.face_mbar.assign(mesh.interfaces.size(), std::vector<double>(dim * nf, 0.0));
    m.face_agreement = 0.0;
    for (std::size_t f = 0; f < mesh.interfaces.size(); ++f) {
        const auto& iface = mesh.interfaces[f];
        const auto& fmax = ops.face(iface.direction, 1);
        const auto& fmin = ops.face(iface.direction, 0);
        for (int j = 0; j < nf; ++j) {
            const int nmax = fmax.volume_nodes[j];
            const int nmin = fmin.volume_nodes[j];
            for (int l = 0; l < dim; ++l) {
                const double own = m.ja_plane(iface.elem_max, iface.direction, l)[nmax];
                const double adj = m.ja_plane(iface.elem_min, iface.direction, l)[nmin];
                m.face_mbar[f][l * nf + j] = 0.5 * (own + adj);
                m.face_agreement = std::max(m.face_agreement, std::abs(own - adj));
            }
        }
    }
    return m;
}

double check_gcl(const MeshGeometry& mesh, const MetricData& metrics,
                 const TensorOperatorSet& ops) {
    const int dim = mesh.dim;
    const int nn = ops.nodes_per_element;
    std::vector<double> div(nn), term(nn);
    double worst = 0.0;
    for (int e = 0; e < mesh.n_elements; ++e) {
        for (int l = 0; l < dim; ++l) {
            std::fill(div.begin(), div.end(), 0.0);
            for (int i = 0; i < dim; ++i) {
                ops.apply_d(i, metrics.ja_plane(e, i, l), term.data(), 1);
                for (int n = 0; n < nn; ++n) div[n] += term[n];
            }
            for (int n = 0; n < nn; ++n) worst = std::max(worst, std::abs(div[n]));
        }
    }
    return worst;
}

double discrete_volume(const MeshGeometry& mesh, const MetricData& metrics,
                       const TensorOperatorSet& ops) {
    double vol = 0.0;
    for (int e = 0; e < mesh.n_elements; ++e)
        for (int n = 0; n < ops.nodes_per_element; ++n)
            vol += ops.mass[n] * metrics.J(e, n);
    return vol;
}

std::string mesh_coords_csv(const MeshGeometry& mesh, const ElementCoords& coords) {
    std::ostringstream os;
    os << "element,node";
    for (int l = 0; l < mesh.dim; ++l) os << ",x" << l + 1;
    os << "\n";
    char buf[64];
    const int nn = mesh.n_elements > 0 ? (int)coords[0].size() / mesh.dim : 0;
    for (int e = 0; e < mesh.n_elements; ++e)
        for (int n = 0; n < nn; ++n) {
            os << e << "," << n;
            for (int l = 0; l < mesh.dim; ++l) {
                std::snprintf(buf, sizeof buf, ",%.16e", coords[e][n * mesh.dim + l]);
                os << buf;
            }
            os << "\n";
        }
    return os.str();
}

} // namespace lyapdg
