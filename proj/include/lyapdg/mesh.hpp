#pragma once

// Tensor-product meshes of a periodic box, push-forward mappings (affine, or
// an analytic 2D warp), and discrete metric data. Metric terms come from the
// cofactor form of the discrete coordinate derivatives, so the discrete
// geometric conservation law holds to machine precision in 1D/2D; 3D is
// restricted to affine mappings where it holds trivially.

#include <array>
#include <string>
#include <vector>

#include "lyapdg/sbp.hpp"

namespace lyapdg {

struct Box {
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    std::array<double, 3> hi{1.0, 1.0, 1.0};
};

enum class MappingKind { affine, smooth_warp_2d };

struct Mapping {
    MappingKind kind = MappingKind::affine;
    double alpha = 0.0; // warp amplitude, |alpha| <= 0.1
};

// One interior (or periodic wrap-around) face shared by two elements: the
// max side holds the face at xi_direction = +1, the min side the face at
// xi_direction = -1. Face node j of one side coincides with face node j of
// the other (conforming tensor meshes, trivially aligned).
struct Interface {
    int elem_max = 0;
    int elem_min = 0;
    int direction = 0;
};

struct MeshGeometry {
    int dim = 1;
    std::array<int, 3> k{1, 1, 1};        // elements per direction
    Box box;
    std::array<bool, 3> periodic{true, true, true};
    int n_elements = 1;
    std::vector<Interface> interfaces;     // one per (element, direction): its max face

    int element_id(const std::array<int, 3>& e) const {
        return e[0] + k[0] * (e[1] + k[1] * e[2]);
    }
    std::array<int, 3> element_coords(int id) const {
        std::array<int, 3> e{0, 0, 0};
        e[0] = id % k[0];
        if (dim > 1) e[1] = (id / k[0]) % k[1];
        if (dim > 2) e[2] = id / (k[0] * k[1]);
        return e;
    }
    // Neighbor across the given face, wrapping periodically. side 1 is +xi.
    int neighbor(int id, int direction, int side) const;
    std::array<double, 3> element_widths() const {
        std::array<double, 3> w{0.0, 0.0, 0.0};
        for (int i = 0; i < dim; ++i) w[i] = (box.hi[i] - box.lo[i]) / k[i];
        return w;
    }
};

MeshGeometry build_box_mesh(int dim, const std::array<int, 3>& k, const Box& box);

// Physical node coordinates per element, node-major: coords[e][n*dim + l].
using ElementCoords = std::vector<std::vector<double>>;

// Evaluates the mapping at every element node. The 2D warp displaces both
// coordinates by alpha*sin(pi x1)*sin(pi x2) of the affine position; that
// displacement has period 2 in each coordinate, so periodic boxes must have
// even integer side lengths for the wrap-around faces to stay water-tight.
ElementCoords apply_mapping(const MeshGeometry& mesh, const Mapping& mapping,
                            const TensorOperatorSet& ops);

// Discrete metric data. Layouts (nn = nodes per element):
//   jac[e][n]                              metric Jacobian J > 0
//   ja[e][(i*dim + l)*nn + n]              metric terms [J a_{xi_i,x_l}]
//   gmat[e][(i*dim + j)*nn + n]            sum_l ja_il * ja_jl / J
//   face_mbar[f][l*nf + j]                 face-averaged normal metric terms,
//                                          f indexes mesh.interfaces
struct MetricData {
    int dim = 1;
    int nn = 0;
    ElementCoords coords;
    std::vector<std::vector<double>> jac;
    std::vector<std::vector<double>> ja;
    std::vector<std::vector<double>> gmat;
    std::vector<std::vector<double>> face_mbar;
    double face_agreement = 0.0; // max mismatch of paired face metric terms

    double J(int e, int n) const { return jac[e][n]; }
    const double* ja_plane(int e, int i, int l) const {
        return ja[e].data() + (i * dim + l) * nn;
    }
    const double* g_plane(int e, int i, int j) const {
        return gmat[e].data() + (i * dim + j) * nn;
    }
};

// Throws GeometryError naming element and node if J <= 0 anywhere.
MetricData compute_metrics(const MeshGeometry& mesh, const ElementCoords& coords,
                           const TensorOperatorSet& ops);

// Max over elements and physical directions of || sum_i D_xi_i ja_il ||_inf.
double check_gcl(const MeshGeometry& mesh, const MetricData& metrics,
                 const TensorOperatorSet& ops);

// sum of M*J over everything; equals the box volume on every valid mesh.
double discrete_volume(const MeshGeometry& mesh, const MetricData& metrics,
                       const TensorOperatorSet& ops);

// CSV dump (element, node, x...) behind the CLI flag.
std::string mesh_coords_csv(const MeshGeometry& mesh, const ElementCoords& coords);

} // namespace lyapdg
