#pragma once

#include "fvk/fem_p1.hpp"

#include <array>
#include <functional>
#include <utility>
#include <vector>

namespace fvk {

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat12x9 = Eigen::Matrix<double, 12, 9>;
using Mat4x9 = Eigen::Matrix<double, 4, 9>;

/// Deflection field in the discrete Kirchhoff space: per node one value and
/// one gradient pair; with crease slots active, crease nodes carry a second
/// gradient pair for the other side of the crease while the value stays
/// single-valued.
struct DktField {
    const Triangulation* mesh = nullptr;
    bool crease_slots = false;
    VecX value;
    MatX2 grad;    // side-1 gradients (and the only slot off the crease)
    MatX2 grad2;   // side-2 gradients; equals grad away from the crease

    static DktField zero(const Triangulation& m, bool crease_slots = false) {
        DktField f;
        f.mesh = &m;
        f.crease_slots = crease_slots && !m.crease_nodes.empty();
        f.value = VecX::Zero(m.node_count());
        f.grad = MatX2::Zero(m.node_count(), 2);
        f.grad2 = f.grad;
        return f;
    }

    static DktField interpolate(const Triangulation& m, const std::function<double(Vec2)>& w,
                                const std::function<Vec2(Vec2)>& grad_w, bool crease_slots = false) {
        DktField f = zero(m, crease_slots);
        for (int i = 0; i < m.node_count(); ++i) {
            f.value[i] = w(m.nodes[static_cast<std::size_t>(i)]);
            f.grad.row(i) = grad_w(m.nodes[static_cast<std::size_t>(i)]).transpose();
        }
        f.grad2 = f.grad;
        return f;
    }

    Vec2 gradient(int node, int side) const {
        if (side == 2 && crease_slots && mesh->crease_node[static_cast<std::size_t>(node)])
            return grad2.row(node).transpose();
        return grad.row(node).transpose();
    }

    void set_gradient(int node, int side, const Vec2& g) {
        bool split = crease_slots && mesh->crease_node[static_cast<std::size_t>(node)];
        if (!split) {
            grad.row(node) = g.transpose();
            grad2.row(node) = g.transpose();
        } else if (side == 2) {
            grad2.row(node) = g.transpose();
        } else {
            grad.row(node) = g.transpose();
        }
    }
};

/// Algebraic layout of the deflection unknowns. Every node owns a
/// (value, d1, d2) triple; crease nodes own one triple per side, and the
/// pairs of duplicated value slots are recorded so the solver can tie them
/// back together with multipliers.
struct WDofMap {
    int n_dofs = 0;
    bool split = false;
    std::vector<std::array<int, 3>> side1, side2;
    std::vector<std::pair<int, int>> value_pairs;  // (side-1 value, side-2 value) per crease node
    std::vector<int> crease_pair_nodes;            // node id per entry of value_pairs

    static WDofMap build(const Triangulation& m, bool use_crease) {
        WDofMap map;
        map.split = use_crease && !m.crease_nodes.empty();
        map.side1.resize(static_cast<std::size_t>(m.node_count()));
        map.side2.resize(static_cast<std::size_t>(m.node_count()));
        int next = 0;
        for (int i = 0; i < m.node_count(); ++i) {
            std::array<int, 3> a{next, next + 1, next + 2};
            next += 3;
            map.side1[static_cast<std::size_t>(i)] = a;
            if (map.split && m.crease_node[static_cast<std::size_t>(i)]) {
                std::array<int, 3> b{next, next + 1, next + 2};
                next += 3;
                map.side2[static_cast<std::size_t>(i)] = b;
                map.value_pairs.emplace_back(a[0], b[0]);
                map.crease_pair_nodes.push_back(i);
            } else {
                map.side2[static_cast<std::size_t>(i)] = a;
            }
        }
        map.n_dofs = next;
        return map;
    }

    const std::array<int, 3>& dofs(int node, int side) const {
        return side == 2 ? side2[static_cast<std::size_t>(node)] : side1[static_cast<std::size_t>(node)];
    }
};

/// Scatter a field into the algebraic vector (crease values duplicated).
inline VecX to_algebraic(const DktField& f, const WDofMap& map) {
    VecX x = VecX::Zero(map.n_dofs);
    const Triangulation& m = *f.mesh;
    for (int i = 0; i < m.node_count(); ++i) {
        for (int side = 1; side <= 2; ++side) {
            const auto& d = map.dofs(i, side);
            x[d[0]] = f.value[i];
            Vec2 g = f.gradient(i, side);
            x[d[1]] = g.x();
            x[d[2]] = g.y();
        }
    }
    return x;
}

/// Gather an algebraic vector back into a field. Duplicated crease values are
/// averaged; the largest value jump across the pairs is reported so callers
/// can track the continuity defect of the constrained solve.
inline DktField from_algebraic(const Triangulation& m, const WDofMap& map, const VecX& x,
                               double* max_value_jump = nullptr) {
    DktField f = DktField::zero(m, map.split);
    double jump = 0;
    for (int i = 0; i < m.node_count(); ++i) {
        const auto& d1 = map.dofs(i, 1);
        const auto& d2 = map.dofs(i, 2);
        if (d1[0] != d2[0]) {
            jump = std::max(jump, std::abs(x[d1[0]] - x[d2[0]]));
            f.value[i] = 0.5 * (x[d1[0]] + x[d2[0]]);
        } else {
            f.value[i] = x[d1[0]];
        }
        f.grad.row(i) << x[d1[1]], x[d1[2]];
        f.grad2.row(i) << x[d2[1]], x[d2[2]];
    }
    if (max_value_jump) *max_value_jump = jump;
    return f;
}

/// Element degrees of freedom (w, d1 w, d2 w per vertex) gathered from a field,
/// with crease nodes contributing the gradient slot of the element's side.
inline Vec9 element_dofs(const DktField& f, int t) {
    const Triangulation& m = *f.mesh;
    const auto& tr = m.triangles[static_cast<std::size_t>(t)];
    int side = m.subdomain[static_cast<std::size_t>(t)];
    Vec9 d;
    for (int k = 0; k < 3; ++k) {
        int n = tr[static_cast<std::size_t>(k)];
        Vec2 g = f.gradient(n, side);
        d[3 * k] = f.value[n];
        d[3 * k + 1] = g.x();
        d[3 * k + 2] = g.y();
    }
    return d;
}

/// Global column indices of the element DOFs in the algebraic layout.
inline std::array<int, 9> element_dof_ids(const Triangulation& m, const WDofMap& map, int t) {
    const auto& tr = m.triangles[static_cast<std::size_t>(t)];
    int side = m.subdomain[static_cast<std::size_t>(t)];
    std::array<int, 9> ids{};
    for (int k = 0; k < 3; ++k) {
        const auto& d = map.dofs(tr[static_cast<std::size_t>(k)], side);
        ids[static_cast<std::size_t>(3 * k)] = d[0];
        ids[static_cast<std::size_t>(3 * k + 1)] = d[1];
        ids[static_cast<std::size_t>(3 * k + 2)] = d[2];
    }
    return ids;
}

/// Per-element operators of the discrete gradient:
///   G maps the 9 element DOFs to the 12 coefficients of the quadratic
///     vector field theta = grad_h w at the 6 Lagrange nodes (vertices then
///     edge midpoints (0,1), (1,2), (2,0); x before y per node);
///   H[q] maps the element DOFs to the four entries of grad theta at edge
///     midpoint q, flattened row-major as (d1 t1, d2 t1, d1 t2, d2 t2).
/// grad theta is elementwise linear and |grad theta - a I|^2 quadratic, so the
/// 3-point edge-midpoint rule integrates the bending density exactly.
struct DktElementOps {
    Mat12x9 G = Mat12x9::Zero();
    std::array<Mat4x9, 3> H{Mat4x9::Zero(), Mat4x9::Zero(), Mat4x9::Zero()};
    double area = 0;
};

inline DktElementOps build_discrete_gradient(const Triangulation& m, int t) {
    DktElementOps ops;
    ops.area = m.area(t);
    if (!(ops.area > 1e-14 * std::max(1.0, m.mesh_size * m.mesh_size)))
        throw ConfigError("build_discrete_gradient: degenerate triangle " + std::to_string(t));

    const auto& tr = m.triangles[static_cast<std::size_t>(t)];
    const Vec2 p[3] = {m.nodes[static_cast<std::size_t>(tr[0])], m.nodes[static_cast<std::size_t>(tr[1])],
                       m.nodes[static_cast<std::size_t>(tr[2])]};

    // vertex rows: theta(z_i) = grad w(z_i)
    for (int i = 0; i < 3; ++i) {
        ops.G(2 * i, 3 * i + 1) = 1.0;
        ops.G(2 * i + 1, 3 * i + 2) = 1.0;
    }
    // midpoint rows: normal part is the endpoint average, tangential part the
    // derivative of the cubic edge trace,
    //   theta(z_S) = (I/2 - 3/4 t t^T)(g_i + g_j) + 3/(2|S|) (w_j - w_i) t
    const int ev[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    for (int e = 0; e < 3; ++e) {
        int i = ev[e][0], j = ev[e][1];
        Vec2 d = p[j] - p[i];
        double L = d.norm();
        Vec2 tau = d / L;
        Mat2 M = 0.5 * Mat2::Identity() - 0.75 * tau * tau.transpose();
        int r = 2 * (3 + e);
        ops.G.block<2, 2>(r, 3 * i + 1) += M;
        ops.G.block<2, 2>(r, 3 * j + 1) += M;
        double c = 1.5 / L;
        ops.G.block<2, 1>(r, 3 * j) += c * tau;
        ops.G.block<2, 1>(r, 3 * i) -= c * tau;
    }

    // gradients of the P2 basis at the edge midpoints
    auto lam = hat_gradients(m, t);
    const double mid[3][3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
    for (int q = 0; q < 3; ++q) {
        std::array<Vec2, 6> gphi;
        for (int i = 0; i < 3; ++i) gphi[static_cast<std::size_t>(i)] = (4.0 * mid[q][i] - 1.0) * lam[static_cast<std::size_t>(i)];
        for (int e = 0; e < 3; ++e) {
            int i = ev[e][0], j = ev[e][1];
            gphi[static_cast<std::size_t>(3 + e)] =
                4.0 * (mid[q][j] * lam[static_cast<std::size_t>(i)] + mid[q][i] * lam[static_cast<std::size_t>(j)]);
        }
        Mat4x9 Hq = Mat4x9::Zero();
        for (int a = 0; a < 6; ++a)
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c)
                    Hq.row(2 * r + c) += gphi[static_cast<std::size_t>(a)][c] * ops.G.row(2 * a + r);
        ops.H[static_cast<std::size_t>(q)] = Hq;
    }
    return ops;
}

inline std::vector<DktElementOps> build_all_element_ops(const Triangulation& m) {
    std::vector<DktElementOps> ops;
    ops.reserve(m.triangles.size());
    for (int t = 0; t < m.triangle_count(); ++t) ops.push_back(build_discrete_gradient(m, t));
    return ops;
}

/// The discrete Hessian grad grad_h w on one element: an elementwise-linear
/// 2x2 field represented by its values at the three edge midpoints. It is
/// generally nonsymmetric since theta is not a gradient field.
struct ElementHessian {
    std::array<Mat2, 3> at_midpoints;

    Mat2 average() const { return (at_midpoints[0] + at_midpoints[1] + at_midpoints[2]) / 3.0; }
};

inline Mat2 unflatten(const Eigen::Matrix<double, 4, 1>& v) {
    Mat2 M;
    M << v[0], v[1], v[2], v[3];
    return M;
}

inline ElementHessian discrete_hessian(const DktField& w, int t, const DktElementOps& ops) {
    Vec9 d = element_dofs(w, t);
    ElementHessian h;
    for (int q = 0; q < 3; ++q) h.at_midpoints[static_cast<std::size_t>(q)] = unflatten(ops.H[static_cast<std::size_t>(q)] * d);
    return h;
}

inline std::vector<ElementHessian> discrete_hessian(const DktField& w, const std::vector<DktElementOps>& ops) {
    std::vector<ElementHessian> out;
    out.reserve(ops.size());
    for (int t = 0; t < w.mesh->triangle_count(); ++t) out.push_back(discrete_hessian(w, t, ops[static_cast<std::size_t>(t)]));
    return out;
}

/// Values of theta = grad_h w at the 6 Lagrange nodes of element t.
inline std::array<Vec2, 6> discrete_gradient_values(const DktField& w, int t, const DktElementOps& ops) {
    Eigen::Matrix<double, 12, 1> c = ops.G * element_dofs(w, t);
    std::array<Vec2, 6> v;
    for (int a = 0; a < 6; ++a) v[static_cast<std::size_t>(a)] = Vec2(c[2 * a], c[2 * a + 1]);
    return v;
}

/// Evaluate theta at a barycentric point of element t.
inline Vec2 discrete_gradient_at(const DktField& w, int t, const DktElementOps& ops, const std::array<double, 3>& lambda) {
    auto v = discrete_gradient_values(w, t, ops);
    const int ev[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    Vec2 s = Vec2::Zero();
    for (int i = 0; i < 3; ++i) s += lambda[static_cast<std::size_t>(i)] * (2.0 * lambda[static_cast<std::size_t>(i)] - 1.0) * v[static_cast<std::size_t>(i)];
    for (int e = 0; e < 3; ++e) {
        int i = ev[e][0], j = ev[e][1];
        s += 4.0 * lambda[static_cast<std::size_t>(i)] * lambda[static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(3 + e)];
    }
    return s;
}

/// Evaluate grad grad_h w at a barycentric point (the field is linear).
inline Mat2 discrete_hessian_at(const ElementHessian& h, const std::array<double, 3>& lambda) {
    // midpoint values m_e relate to vertex values by v_i = m_{i+2} + m_i - m_{i+1}
    // for the edge ordering (0,1),(1,2),(2,0); interpolate linearly instead by
    // lambda-weights of the midpoint basis: p(l) = sum_e m_e (1 - 2 l_{opp(e)})
    const int opp[3] = {2, 0, 1};
    Mat2 s = Mat2::Zero();
    for (int e = 0; e < 3; ++e) s += (1.0 - 2.0 * lambda[static_cast<std::size_t>(opp[e])]) * h.at_midpoints[static_cast<std::size_t>(e)];
    return s;
}

}  // namespace fvk
