#pragma once

// Brute-force reference implementations for the test suite: dense matrix
// algebra, materialized Kronecker operators, global 1D assembly matrices,
// and an extended-precision logarithmic mean. Everything here favors
// obviousness over speed; production code must match these, not vice versa.

#include <cmath>
#include <random>
#include <vector>

#include "lyapdg/sbp.hpp"

namespace oracles {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a((size_t)r * c, 0.0) {}
    double& operator()(int i, int j) { return a[(size_t)i * cols + j]; }
    double operator()(int i, int j) const { return a[(size_t)i * cols + j]; }
};

inline Mat eye(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

inline Mat matmul(const Mat& x, const Mat& y) {
    Mat z(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int k = 0; k < x.cols; ++k) {
            const double xik = x(i, k);
            if (xik == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) z(i, j) += xik * y(k, j);
        }
    return z;
}

inline Mat transpose(const Mat& x) {
    Mat z(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) z(j, i) = x(i, j);
    return z;
}

inline std::vector<double> matvec(const Mat& m, const std::vector<double>& v) {
    std::vector<double> y(m.rows, 0.0);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) y[i] += m(i, j) * v[j];
    return y;
}

// Row-major Kronecker product: (A kron B) acts with A on the slow index and
// B on the fast index of a flattened array x[ia * nb + ib].
inline Mat kron(const Mat& x, const Mat& y) {
    Mat z(x.rows * y.rows, x.cols * y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) {
            const double v = x(i, j);
            if (v == 0.0) continue;
            for (int k = 0; k < y.rows; ++k)
                for (int l = 0; l < y.cols; ++l)
                    z(i * y.rows + k, j * y.cols + l) = v * y(k, l);
        }
    return z;
}

inline Mat dense_d(const lyapdg::SbpOperator1D& op) {
    Mat m(op.n, op.n);
    m.a = op.d;
    return m;
}

inline Mat dense_q(const lyapdg::SbpOperator1D& op) {
    Mat m(op.n, op.n);
    m.a = op.q;
    return m;
}

// Tensor derivative along `direction` (0 fastest), materialized as
// kron(I, ..., D, ..., I) for the node ordering with xi_1 fastest.
inline Mat tensor_derivative(const lyapdg::SbpOperator1D& op, int dim, int direction) {
    Mat m = direction == dim - 1 ? dense_d(op) : eye(op.n);
    for (int l = dim - 2; l >= 0; --l)
        m = kron(m, l == direction ? dense_d(op) : eye(op.n));
    return m;
}

// Global skew form of the periodic 1D convective assembly on K elements:
// blockdiag(2Q - E) plus +-1 couplings between touching endpoints. The
// semi-discrete RHS is u' = -M^-1 (G o F) 1 with F the two-point flux
// table, and G + G^T = 0.
inline Mat global_convective_matrix(const lyapdg::SbpOperator1D& op, int k) {
    const int n = op.n;
    const int big = k * n;
    Mat g(big, big);
    for (int e = 0; e < k; ++e)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(e * n + i, e * n + j) = 2.0 * op.q[i * n + j];
    for (int e = 0; e < k; ++e) {
        const int last = e * n + (n - 1);
        const int first_next = ((e + 1) % k) * n;
        g(last, last) -= 1.0;
        g(first_next, first_next) += 1.0;
        g(last, first_next) += 1.0;
        g(first_next, last) -= 1.0;
    }
    return g;
}

// Global corrected-gradient matrix of the periodic 1D viscous assembly:
// blockdiag(Q) with half-averaging rows at the element joints, to be scaled
// by the inverse mass. Applied to w it yields the interface-corrected
// derivative whose adjoint shows up in the viscous volume term.
inline Mat global_gradient_matrix(const lyapdg::SbpOperator1D& op, int k) {
    const int n = op.n;
    const int big = k * n;
    Mat qc(big, big);
    for (int e = 0; e < k; ++e)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) qc(e * n + i, e * n + j) = op.q[i * n + j];
    for (int e = 0; e < k; ++e) {
        const int last = e * n + (n - 1);
        const int first_next = ((e + 1) % k) * n;
        qc(last, last) -= 0.5;
        qc(last, first_next) += 0.5;
        qc(first_next, first_next) += 0.5;
        qc(first_next, last) -= 0.5;
    }
    return qc;
}

// Logarithmic mean in extended precision with a generously long series on
// the near-equal branch; disagreement with the production double version
// beyond a few ulps is a bug there.
inline long double log_mean_ref(long double x, long double y) {
    const long double f = (x - y) / (x + y);
    const long double u = f * f;
    if (u < 1e-4L) {
        const long double series =
            1.0L + u / 3.0L + u * u / 5.0L + u * u * u / 7.0L + u * u * u * u / 9.0L +
            u * u * u * u * u / 11.0L;
        return (x + y) / (2.0L * series);
    }
    return (x - y) / (std::log(x) - std::log(y));
}

inline std::mt19937_64 rng(unsigned seed = 0x5eed) { return std::mt19937_64(seed); }

} // namespace oracles
