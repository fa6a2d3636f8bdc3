#pragma once

#include "fvk/common.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace fvk {

/// One quadrature point on the reference triangle {l1+l2+l3=1, li>=0},
/// stored as barycentric coordinates plus a weight normalized to sum to 1/2
/// (the reference-triangle area).
struct TrianglePoint {
    std::array<double, 3> lambda;
    double weight;
};

/// Gauss-Legendre nodes/weights on [-1,1], computed by Newton iteration on
/// the Legendre polynomial. Exact for polynomials of degree <= 2n-1.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(n), 0.0);
    w.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double xi = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = xi;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
            double dx = p1 / dp;
            xi -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = xi;
        for (int k = 2; k <= n; ++k) {
            double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
        x[static_cast<std::size_t>(i)] = -xi;  // ascending order
        w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
}

/// Triangle rule built from an n x n tensor Gauss rule via the Duffy
/// (collapsed-square) map. Exact for total degree <= 2n-2 on the triangle,
/// so n = 6 integrates degree-10 polynomials; used where element integrands
/// exceed what the vertex and edge-midpoint rules handle.
inline std::vector<TrianglePoint> duffy_rule(int n) {
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    std::vector<TrianglePoint> pts;
    pts.reserve(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i) {
        double a = 0.5 * (x[static_cast<std::size_t>(i)] + 1.0);   // in (0,1)
        double wa = 0.5 * w[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            double b = 0.5 * (x[static_cast<std::size_t>(j)] + 1.0);
            double wb = 0.5 * w[static_cast<std::size_t>(j)];
            // (xi, eta) = (a(1-b), b), Jacobian (1-b)
            double xi = a * (1.0 - b);
            double eta = b;
            pts.push_back({{1.0 - xi - eta, xi, eta}, wa * wb * (1.0 - b)});
        }
    }
    return pts;
}

/// The 3-point edge-midpoint rule, exact for quadratics.
inline std::vector<TrianglePoint> edge_midpoint_rule() {
    const double w = 1.0 / 6.0;
    return {{{0.5, 0.5, 0.0}, w}, {{0.0, 0.5, 0.5}, w}, {{0.5, 0.0, 0.5}, w}};
}

}  // namespace fvk
