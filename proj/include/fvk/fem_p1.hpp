#pragma once

#include "fvk/mesh.hpp"

#include <array>
#include <functional>
#include <vector>

namespace fvk {

/// Continuous P1 vector field (in-plane displacement): one 2-vector per node.
struct P1VectorField {
    const Triangulation* mesh = nullptr;
    MatX2 values;

    static P1VectorField zero(const Triangulation& m) {
        P1VectorField f;
        f.mesh = &m;
        f.values = MatX2::Zero(m.node_count(), 2);
        return f;
    }

    static P1VectorField interpolate(const Triangulation& m, const std::function<Vec2(Vec2)>& u) {
        P1VectorField f = zero(m);
        for (int i = 0; i < m.node_count(); ++i) f.values.row(i) = u(m.nodes[static_cast<std::size_t>(i)]).transpose();
        return f;
    }

    Vec2 at(int node) const { return values.row(node).transpose(); }
};

/// Gradients of the three hat functions on triangle t (constant vectors).
inline std::array<Vec2, 3> hat_gradients(const Triangulation& m, int t) {
    const auto& tr = m.triangles[static_cast<std::size_t>(t)];
    const Vec2& p0 = m.nodes[static_cast<std::size_t>(tr[0])];
    const Vec2& p1 = m.nodes[static_cast<std::size_t>(tr[1])];
    const Vec2& p2 = m.nodes[static_cast<std::size_t>(tr[2])];
    Mat2 J;
    J.col(0) = p1 - p0;
    J.col(1) = p2 - p0;
    Mat2 Jit = J.inverse().transpose();
    Vec2 g1 = Jit.col(0);
    Vec2 g2 = Jit.col(1);
    return {Vec2(-g1 - g2), g1, g2};
}

/// Constant gradient of a P1 vector field on triangle t: (grad u)_{ab} = d_b u_a.
inline Mat2 p1_gradient(const P1VectorField& u, int t) {
    const auto& tr = u.mesh->triangles[static_cast<std::size_t>(t)];
    auto g = hat_gradients(*u.mesh, t);
    Mat2 G = Mat2::Zero();
    for (int k = 0; k < 3; ++k) G += u.at(tr[static_cast<std::size_t>(k)]) * g[static_cast<std::size_t>(k)].transpose();
    return G;
}

/// Twice the symmetric gradient of u on triangle t.
inline Mat2 p1_strain(const P1VectorField& u, int t) {
    Mat2 G = p1_gradient(u, t);
    return G + G.transpose();
}

/// Vertex-rule weights beta_z^T = |T|/3 per (triangle, local vertex).
struct VertexQuadrature {
    std::vector<double> third_area;  // per triangle

    static VertexQuadrature build(const Triangulation& m) {
        VertexQuadrature q;
        q.third_area.reserve(m.triangles.size());
        for (int t = 0; t < m.triangle_count(); ++t) q.third_area.push_back(m.area(t) / 3.0);
        return q;
    }
};

namespace detail {
inline double field_dot(double a, double b) { return a * b; }
inline double field_dot(const Vec2& a, const Vec2& b) { return a.dot(b); }
inline double field_dot(const Mat2& a, const Mat2& b) { return a.cwiseProduct(b).sum(); }
}  // namespace detail

/// Interpolated (vertex-rule) inner product: both factors are evaluated per
/// triangle at its vertices, so discontinuities across edges are allowed.
/// f(t, k) returns the value of the field on triangle t at local vertex k;
/// scalar, vector and matrix valued fields are supported.
template <class F, class G>
double interpolated_inner_product(const Triangulation& m, F&& f, G&& g) {
    double s = 0;
    for (int t = 0; t < m.triangle_count(); ++t) {
        double w = m.area(t) / 3.0;
        for (int k = 0; k < 3; ++k) s += w * detail::field_dot(f(t, k), g(t, k));
    }
    return s;
}

/// Exact Gram matrix of twice-symmetric gradients over P1 vector fields,
/// (eps(u), eps(z)); DOF layout (u1, u2) interleaved per node. The vertex
/// rule reproduces this matrix exactly since the integrand is elementwise
/// constant.
inline SparseMat strain_stiffness(const Triangulation& m) {
    std::vector<Triplet> trip;
    trip.reserve(m.triangles.size() * 36);
    for (int t = 0; t < m.triangle_count(); ++t) {
        const auto& tr = m.triangles[static_cast<std::size_t>(t)];
        auto g = hat_gradients(m, t);
        double A = m.area(t);
        std::array<Mat2, 6> eb;  // strain of each local basis dof
        for (int k = 0; k < 3; ++k)
            for (int a = 0; a < 2; ++a) {
                Mat2 E = Mat2::Zero();
                E.row(a) += g[static_cast<std::size_t>(k)].transpose();
                eb[static_cast<std::size_t>(2 * k + a)] = E + E.transpose();
            }
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                double v = A * detail::field_dot(eb[static_cast<std::size_t>(i)], eb[static_cast<std::size_t>(j)]);
                int gi = 2 * tr[static_cast<std::size_t>(i / 2)] + (i % 2);
                int gj = 2 * tr[static_cast<std::size_t>(j / 2)] + (j % 2);
                trip.emplace_back(gi, gj, v);
            }
    }
    SparseMat K(2 * m.node_count(), 2 * m.node_count());
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

/// Vertex-rule (lumped) mass per node: sum of |T|/3 over incident triangles.
inline VecX lumped_node_mass(const Triangulation& m) {
    VecX mass = VecX::Zero(m.node_count());
    for (int t = 0; t < m.triangle_count(); ++t) {
        double w = m.area(t) / 3.0;
        for (int k = 0; k < 3; ++k) mass[m.triangles[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]] += w;
    }
    return mass;
}

}  // namespace fvk
