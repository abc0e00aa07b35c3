#pragma once

// One-dimensional diagonal-norm summation-by-parts operators collocated on
// Legendre-Gauss-Lobatto nodes, plus their tensor-product extension to
// several space dimensions and several solution components. The tensor
// extension is applied factorized (line sweeps); nothing here ever builds a
// full Kronecker matrix.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace lyapdg {

// First-derivative SBP operator on the reference interval [-1,1].
// Satisfies D = diag(h)^-1 Q, Q + Q^T = E = diag(-1,0,...,0,1), and
// D xi^k = k xi^(k-1) for k <= p. h is the positive quadrature diagonal,
// exact for polynomials of degree <= 2p-1.
struct SbpOperator1D {
    int p = 0;                   // polynomial degree
    int n = 0;                   // node count, p+1
    std::vector<double> nodes;   // ascending, nodes[0] = -1, nodes[n-1] = +1
    std::vector<double> weights; // diagonal norm h, sum = 2
    std::vector<double> d;       // derivative matrix, row-major n*n
    std::vector<double> q;       // q = diag(h) d, row-major n*n

    double D(int i, int j) const { return d[i * n + j]; }
    double Q(int i, int j) const { return q[i * n + j]; }
    double E(int i, int j) const {
        if (i != j) return 0.0;
        if (i == 0) return -1.0;
        if (i == n - 1) return 1.0;
        return 0.0;
    }
};

// LGL nodes and quadrature weights for degree p (p+1 points). Nodes are the
// roots of (1-xi^2) P'_p(xi); endpoints are pinned to exactly +-1.
// Throws ConfigError unless 1 <= p <= 12.
void build_lgl_nodes(int p, std::vector<double>& nodes, std::vector<double>& weights);

// Full 1D operator family for degree p.
SbpOperator1D build_sbp_d1(int p);

// Residuals of every defining property of an SbpOperator1D. A fresh build
// passes at 1e-13; the report exists so externally supplied or deliberately
// perturbed operators can be certified rather than trusted.
struct SbpVerification {
    double qqt_residual = 0.0;        // max |(Q + Q^T - E)_ij|
    double accuracy_residual = 0.0;   // max over k<=p of |D xi^k - k xi^(k-1)|
    double quadrature_residual = 0.0; // max over k<=2p-1 of weighted-monomial error
    double weight_sum_residual = 0.0; // |sum h - 2|
    double dh_consistency = 0.0;      // max |(diag(h) D - Q)_ij|
    double endpoint_residual = 0.0;   // |nodes[0]+1|, |nodes[n-1]-1|
    double tolerance = 1e-12;
    bool pass = false;
    std::string summary() const;
};

SbpVerification verify_sbp(const SbpOperator1D& op);

// Face of the reference element [-1,1]^dim: direction i in [0,dim), side 0
// at xi_i = -1 and side 1 at xi_i = +1.
struct FaceDescriptor {
    int direction = 0;
    int side = 0;
    std::vector<int> volume_nodes;  // indices of the N1d^(dim-1) face nodes,
                                    // lexicographic in the tangential directions
    std::vector<double> p_perp;     // face quadrature: product of tangential weights
};

// Tensor-product operator set on [-1,1]^dim with r solution components.
// Node ordering is lexicographic with xi_1 fastest; the r components of a
// node are stored contiguously. Derivatives are applied as line sweeps.
struct TensorOperatorSet {
    int dim = 1;
    int r = 1;
    SbpOperator1D op1d;
    int n1d = 0;
    int nodes_per_element = 0;           // n1d^dim
    std::array<int, 3> stride{1, 1, 1};  // node-index stride per direction
    std::vector<double> mass;            // tensor mass diagonal, size n1d^dim
    std::vector<FaceDescriptor> faces;   // 2*dim entries, index = 2*direction + side

    // Base node of every tensor line in each direction (nodes_per_element/n1d
    // entries per direction); line k visits base + q*stride[direction].
    std::array<std::vector<int>, 3> line_base;

    // Node index from per-direction coordinates.
    int node_index(const std::array<int, 3>& q) const {
        return q[0] * stride[0] + q[1] * stride[1] + q[2] * stride[2];
    }
    const FaceDescriptor& face(int direction, int side) const {
        return faces[2 * direction + side];
    }
    // P_perp at a face node equals mass/h_end there; h at the touched endpoint.
    double h_end() const { return op1d.weights[0]; }

    // y_c(n) = sum_line D(q_n, q_m) x_c(m) along `direction` for all nodes.
    // x and y hold ncomp components per node (default: r) and must not
    // alias; ncomp = 1 serves sweeps over scalar fields like metric planes.
    void apply_d(int direction, const double* x, double* y, int ncomp = -1) const;
};

TensorOperatorSet extend_tensor(const SbpOperator1D& op, int dim, int r);

// Plain-text dense dump (row-major, 17 significant digits per entry) of the
// 1D matrices for external verification.
std::string dump_operator_text(const SbpOperator1D& op);

} // namespace lyapdg
