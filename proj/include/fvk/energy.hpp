#pragma once

#include "fvk/fem_dkt.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace fvk {

/// Problem data: energy parameters, load, boundary conditions and the flow
/// metric options. Boundary values are per-node arrays (empty means zero).
/// `use_crease` activates the duplicated gradient slots on the mesh's crease
/// nodes; the same mesh can then be run with and without predamage.
struct ProblemSpec {
    const Triangulation* mesh = nullptr;
    double theta = 0;
    double alpha1 = 0;
    double alpha2 = 0;
    VecX force;                       // nodal vertical load density
    std::vector<int> clamped_nodes;   // fix w, grad w and u
    std::vector<int> simple_nodes;    // fix w only
    VecX bc_w;                        // per-node w values for constrained nodes
    MatX2 bc_grad_w;                  // per-node gradients for clamped nodes
    MatX2 bc_u;                       // per-node u values for clamped nodes
    bool l2_metric_w = false;
    bool l2_metric_u = false;
    bool pin_rigid_u = false;         // gauge-fix the three in-plane rigid modes
    int pinned_node = -1;             // value dof pinned to zero
    bool use_crease = false;

    double alpha_of(int tri) const { return mesh->subdomain[static_cast<std::size_t>(tri)] == 2 ? alpha2 : alpha1; }

    double bc_w_at(int node) const { return bc_w.size() ? bc_w[node] : 0.0; }
    Vec2 bc_grad_w_at(int node) const {
        return bc_grad_w.rows() ? Vec2(bc_grad_w.row(node).transpose()) : Vec2::Zero();
    }
    Vec2 bc_u_at(int node) const { return bc_u.rows() ? Vec2(bc_u.row(node).transpose()) : Vec2::Zero(); }
};

struct EnergyBreakdown {
    double bending = 0;
    double membrane = 0;
    double force = 0;
    double total = 0;
};

struct Diagnostics {
    double mean_curv_1 = 0;
    double mean_curv_2 = 0;
    double q_sym = std::numeric_limits<double>::quiet_NaN();
    bool q_sym_defined = false;
};

struct DofMask {
    std::vector<char> fixed;
    VecX values;
};

namespace detail {

inline Eigen::Matrix<double, 4, 1> flatten_scaled_identity(double a) {
    Eigen::Matrix<double, 4, 1> v;
    v << a, 0, 0, a;
    return v;
}

inline Mat2 strain_from_vec(const Triangulation& m, const VecX& u, int t) {
    const auto& tr = m.triangles[static_cast<std::size_t>(t)];
    auto g = hat_gradients(m, t);
    Mat2 G = Mat2::Zero();
    for (int k = 0; k < 3; ++k) {
        Vec2 uk(u[2 * tr[static_cast<std::size_t>(k)]], u[2 * tr[static_cast<std::size_t>(k)] + 1]);
        G += uk * g[static_cast<std::size_t>(k)].transpose();
    }
    return G + G.transpose();
}

}  // namespace detail

/// Precomputed element operators and global matrices for one problem setup:
/// bending stiffness and load, flow metrics, strain stiffness, lumped masses,
/// force functional and the Dirichlet masks. Rebuilt when the spec changes.
struct EnergyAssembly {
    ProblemSpec spec;
    std::vector<DktElementOps> ops;
    WDofMap wmap;
    SparseMat bend;          // (D_h^2 ., D_h^2 .)
    VecX alpha_load;         // (alpha I, D_h^2 .) per dof
    VecX w_value_mass;       // vertex-rule masses on value dofs
    SparseMat w_metric;      // vertical flow metric
    VecX force_load;         // (f, .)_h per dof at unit force scale
    SparseMat eps_stiff;     // (eps ., eps .) on P1 vector fields
    VecX u_mass;             // vertex-rule masses per u dof
    SparseMat u_metric;      // horizontal flow metric
    DofMask w_dirichlet, u_dirichlet;

    explicit EnergyAssembly(const ProblemSpec& s) : spec(s) {
        const Triangulation& m = *spec.mesh;
        ops = build_all_element_ops(m);
        wmap = WDofMap::build(m, spec.use_crease);

        std::vector<Triplet> trip;
        trip.reserve(ops.size() * 81);
        alpha_load = VecX::Zero(wmap.n_dofs);
        w_value_mass = VecX::Zero(wmap.n_dofs);
        force_load = VecX::Zero(wmap.n_dofs);
        for (int t = 0; t < m.triangle_count(); ++t) {
            const auto& op = ops[static_cast<std::size_t>(t)];
            auto ids = element_dof_ids(m, wmap, t);
            double w3 = op.area / 3.0;
            Eigen::Matrix<double, 9, 9> K = Eigen::Matrix<double, 9, 9>::Zero();
            Vec9 l = Vec9::Zero();
            auto ai = detail::flatten_scaled_identity(spec.alpha_of(t));
            for (int q = 0; q < 3; ++q) {
                K += w3 * op.H[static_cast<std::size_t>(q)].transpose() * op.H[static_cast<std::size_t>(q)];
                l += w3 * op.H[static_cast<std::size_t>(q)].transpose() * ai;
            }
            for (int i = 0; i < 9; ++i) {
                alpha_load[ids[static_cast<std::size_t>(i)]] += l[i];
                for (int j = 0; j < 9; ++j)
                    trip.emplace_back(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)], K(i, j));
            }
            const auto& tr = m.triangles[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k) {
                int vdof = ids[static_cast<std::size_t>(3 * k)];
                w_value_mass[vdof] += w3;
                if (spec.force.size()) force_load[vdof] += w3 * spec.force[tr[static_cast<std::size_t>(k)]];
            }
        }
        bend.resize(wmap.n_dofs, wmap.n_dofs);
        bend.setFromTriplets(trip.begin(), trip.end());

        w_metric = bend;
        if (spec.l2_metric_w) {
            SparseMat mass(wmap.n_dofs, wmap.n_dofs);
            std::vector<Triplet> mt;
            for (int d = 0; d < wmap.n_dofs; ++d)
                if (w_value_mass[d] != 0.0) mt.emplace_back(d, d, w_value_mass[d]);
            mass.setFromTriplets(mt.begin(), mt.end());
            w_metric = SparseMat(bend + mass);
        }

        eps_stiff = strain_stiffness(m);
        VecX nm = lumped_node_mass(m);
        u_mass = VecX::Zero(2 * m.node_count());
        for (int i = 0; i < m.node_count(); ++i) u_mass[2 * i] = u_mass[2 * i + 1] = nm[i];
        u_metric = eps_stiff;
        if (spec.l2_metric_u) {
            SparseMat mass(2 * m.node_count(), 2 * m.node_count());
            std::vector<Triplet> mt;
            for (int d = 0; d < 2 * m.node_count(); ++d) mt.emplace_back(d, d, u_mass[d]);
            mass.setFromTriplets(mt.begin(), mt.end());
            u_metric = SparseMat(eps_stiff + mass);
        }

        // Dirichlet masks
        w_dirichlet.fixed.assign(static_cast<std::size_t>(wmap.n_dofs), 0);
        w_dirichlet.values = VecX::Zero(wmap.n_dofs);
        u_dirichlet.fixed.assign(static_cast<std::size_t>(2 * m.node_count()), 0);
        u_dirichlet.values = VecX::Zero(2 * m.node_count());
        auto fix_w_value = [&](int node, double v) {
            for (int side = 1; side <= 2; ++side) {
                int d = wmap.dofs(node, side)[0];
                w_dirichlet.fixed[static_cast<std::size_t>(d)] = 1;
                w_dirichlet.values[d] = v;
            }
        };
        for (int n : spec.simple_nodes) fix_w_value(n, spec.bc_w_at(n));
        for (int n : spec.clamped_nodes) {
            fix_w_value(n, spec.bc_w_at(n));
            Vec2 g = spec.bc_grad_w_at(n);
            for (int side = 1; side <= 2; ++side) {
                const auto& d = wmap.dofs(n, side);
                w_dirichlet.fixed[static_cast<std::size_t>(d[1])] = 1;
                w_dirichlet.fixed[static_cast<std::size_t>(d[2])] = 1;
                w_dirichlet.values[d[1]] = g.x();
                w_dirichlet.values[d[2]] = g.y();
            }
            Vec2 uv = spec.bc_u_at(n);
            u_dirichlet.fixed[static_cast<std::size_t>(2 * n)] = 1;
            u_dirichlet.fixed[static_cast<std::size_t>(2 * n + 1)] = 1;
            u_dirichlet.values[2 * n] = uv.x();
            u_dirichlet.values[2 * n + 1] = uv.y();
        }
        if (spec.pinned_node >= 0) fix_w_value(spec.pinned_node, 0.0);

        // in-plane rigid-body gauge: u vanishes at one anchor node and the
        // rotation is killed through one component at a far node; u enters
        // the energy only through its strain, so the states are unchanged
        if (spec.pin_rigid_u) {
            int na = m.boundary_nodes.empty() ? 0 : m.boundary_nodes.front();
            int nb = na;
            double best = -1;
            for (int i = 0; i < m.node_count(); ++i) {
                double d = (m.nodes[static_cast<std::size_t>(i)] - m.nodes[static_cast<std::size_t>(na)]).squaredNorm();
                if (d > best) {
                    best = d;
                    nb = i;
                }
            }
            Vec2 d = m.nodes[static_cast<std::size_t>(nb)] - m.nodes[static_cast<std::size_t>(na)];
            Vec2 perp(-d.y(), d.x());
            int comp = std::abs(perp.x()) >= std::abs(perp.y()) ? 0 : 1;
            for (int c = 0; c < 2; ++c) {
                u_dirichlet.fixed[static_cast<std::size_t>(2 * na + c)] = 1;
                u_dirichlet.values[2 * na + c] = 0.0;
            }
            u_dirichlet.fixed[static_cast<std::size_t>(2 * nb + comp)] = 1;
            u_dirichlet.values[2 * nb + comp] = 0.0;
        }
    }

    const Triangulation& mesh() const { return *spec.mesh; }
};

/// Discrete energy E_h: exact bending quadrature, vertex-rule membrane and
/// force terms. The deflection gradients entering the membrane term are the
/// nodal gradient DOFs themselves.
inline EnergyBreakdown assemble_energy_ops(const VecX& u, const DktField& w, const ProblemSpec& spec,
                                           const std::vector<DktElementOps>& ops, double force_scale = 1.0) {
    const Triangulation& m = *spec.mesh;
    EnergyBreakdown e;
    for (int t = 0; t < m.triangle_count(); ++t) {
        const auto& op = ops[static_cast<std::size_t>(t)];
        double w3 = op.area / 3.0;
        Vec9 d = element_dofs(w, t);
        auto ai = detail::flatten_scaled_identity(spec.alpha_of(t));
        for (int q = 0; q < 3; ++q) {
            Eigen::Matrix<double, 4, 1> hq = op.H[static_cast<std::size_t>(q)] * d - ai;
            e.bending += 0.5 * w3 * hq.squaredNorm();
        }
        Mat2 eps = detail::strain_from_vec(m, u, t);
        int side = m.subdomain[static_cast<std::size_t>(t)];
        const auto& tr = m.triangles[static_cast<std::size_t>(t)];
        for (int k = 0; k < 3; ++k) {
            int n = tr[static_cast<std::size_t>(k)];
            Vec2 g = w.gradient(n, side);
            Mat2 phi = g * g.transpose() + eps;
            e.membrane += 0.5 * spec.theta * w3 * phi.cwiseProduct(phi).sum();
            if (spec.force.size()) e.force += force_scale * w3 * spec.force[n] * w.value[n];
        }
    }
    e.total = e.bending + e.membrane - e.force;
    return e;
}

inline EnergyBreakdown assemble_energy(const P1VectorField& u, const DktField& w, const ProblemSpec& spec,
                                       double force_scale = 1.0) {
    VecX uv(2 * u.values.rows());
    for (int i = 0; i < u.values.rows(); ++i) {
        uv[2 * i] = u.values(i, 0);
        uv[2 * i + 1] = u.values(i, 1);
    }
    return assemble_energy_ops(uv, w, spec, build_all_element_ops(*spec.mesh), force_scale);
}

namespace detail {

inline Vec2 grad_dofs(const VecX& w_alg, const std::array<int, 3>& d) { return Vec2(w_alg[d[1]], w_alg[d[2]]); }

}  // namespace detail

/// Residual of the implicit deflection step, assembled over all test
/// functions: metric term on the update, bending term, vertex-rule membrane
/// term with the midpoint splitting in the previous iterate, and the force.
inline VecX w_residual(const EnergyAssembly& a, const VecX& u_prev, const VecX& w_alg, const VecX& w_prev_alg,
                       double tau, double force_scale = 1.0) {
    const Triangulation& m = a.mesh();
    VecX F = a.w_metric * (w_alg - w_prev_alg);
    F += tau * (a.bend * w_alg - a.alpha_load);
    F -= tau * force_scale * a.force_load;
    const double c = tau * a.spec.theta;
    if (c != 0.0) {
        for (int t = 0; t < m.triangle_count(); ++t) {
            double w3 = a.ops[static_cast<std::size_t>(t)].area / 3.0;
            Mat2 eps = detail::strain_from_vec(m, u_prev, t);
            int side = m.subdomain[static_cast<std::size_t>(t)];
            const auto& tr = m.triangles[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k) {
                const auto& d = a.wmap.dofs(tr[static_cast<std::size_t>(k)], side);
                Vec2 g = detail::grad_dofs(w_alg, d);
                Vec2 gp = detail::grad_dofs(w_prev_alg, d);
                Vec2 r = 2.0 * g.squaredNorm() * g + eps * (g + gp);
                F[d[1]] += c * w3 * r.x();
                F[d[2]] += c * w3 * r.y();
            }
        }
    }
    return F;
}

/// Derivative of w_residual in the deflection: symmetric, equal to
/// (1+tau) bending metric plus the lumped vertex-rule membrane blocks.
inline SparseMat w_jacobian(const EnergyAssembly& a, const VecX& u_prev, const VecX& w_alg, double tau) {
    const Triangulation& m = a.mesh();
    SparseMat J = a.w_metric + tau * a.bend;
    const double c = tau * a.spec.theta;
    if (c != 0.0) {
        std::vector<Triplet> trip;
        trip.reserve(m.triangles.size() * 12);
        for (int t = 0; t < m.triangle_count(); ++t) {
            double w3 = a.ops[static_cast<std::size_t>(t)].area / 3.0;
            Mat2 eps = detail::strain_from_vec(m, u_prev, t);
            int side = m.subdomain[static_cast<std::size_t>(t)];
            const auto& tr = m.triangles[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k) {
                const auto& d = a.wmap.dofs(tr[static_cast<std::size_t>(k)], side);
                Vec2 g = detail::grad_dofs(w_alg, d);
                Mat2 B = 4.0 * g * g.transpose() + 2.0 * g.squaredNorm() * Mat2::Identity() + eps;
                for (int r = 0; r < 2; ++r)
                    for (int cc = 0; cc < 2; ++cc) trip.emplace_back(d[1 + r], d[1 + cc], c * w3 * B(r, cc));
            }
        }
        SparseMat blocks(a.wmap.n_dofs, a.wmap.n_dofs);
        blocks.setFromTriplets(trip.begin(), trip.end());
        J += blocks;
    }
    return J;
}

/// Merit functional whose stationary points solve the deflection step;
/// w_residual equals tau times its gradient.
inline double w_merit(const EnergyAssembly& a, const VecX& u_prev, const VecX& w_alg, const VecX& w_prev_alg,
                      double tau, double force_scale = 1.0) {
    const Triangulation& m = a.mesh();
    VecX dw = w_alg - w_prev_alg;
    double val = 0.5 / tau * dw.dot(a.w_metric * dw);
    val += 0.5 * w_alg.dot(a.bend * w_alg) - a.alpha_load.dot(w_alg);
    for (int t = 0; t < m.triangle_count(); ++t) {
        const auto& op = a.ops[static_cast<std::size_t>(t)];
        double w3 = op.area / 3.0;
        auto ai = detail::flatten_scaled_identity(a.spec.alpha_of(t));
        val += 0.5 * op.area * ai.squaredNorm();  // completes |D_h^2 w - alpha I|^2
        Mat2 eps = detail::strain_from_vec(m, u_prev, t);
        int side = m.subdomain[static_cast<std::size_t>(t)];
        const auto& tr = m.triangles[static_cast<std::size_t>(t)];
        for (int k = 0; k < 3; ++k) {
            const auto& d = a.wmap.dofs(tr[static_cast<std::size_t>(k)], side);
            Vec2 g = detail::grad_dofs(w_alg, d);
            Vec2 gs = g + detail::grad_dofs(w_prev_alg, d);
            val += 0.5 * a.spec.theta * w3 * (g.squaredNorm() * g.squaredNorm() + gs.dot(eps * gs));
        }
    }
    val -= force_scale * a.force_load.dot(w_alg);
    return val;
}

/// Linear system of the in-plane step: matrix and right-hand side such that
/// A u_new = b realizes the implicit strain equation in the horizontal metric.
struct USystem {
    SparseMat A;
    VecX b;
};

inline USystem u_step_system(const EnergyAssembly& a, const DktField& w, const VecX& u_prev, double tau) {
    const Triangulation& m = a.mesh();
    bool constrained = !a.spec.clamped_nodes.empty() || a.spec.pin_rigid_u;
    if (!constrained && !a.spec.l2_metric_u)
        throw SolverError(
            "u step: strain matrix is singular (rigid-body modes); clamp u, pin the rigid modes or enable the "
            "L2-augmented metric");
    USystem s;
    s.A = a.u_metric + (tau * a.spec.theta) * a.eps_stiff;
    s.b = a.u_metric * u_prev;
    if (a.spec.theta != 0.0) {
        VecX bs = VecX::Zero(2 * m.node_count());
        for (int t = 0; t < m.triangle_count(); ++t) {
            double w3 = a.ops[static_cast<std::size_t>(t)].area / 3.0;
            int side = m.subdomain[static_cast<std::size_t>(t)];
            const auto& tr = m.triangles[static_cast<std::size_t>(t)];
            Mat2 S = Mat2::Zero();
            for (int k = 0; k < 3; ++k) {
                Vec2 g = w.gradient(tr[static_cast<std::size_t>(k)], side);
                S += w3 * g * g.transpose();
            }
            auto hg = hat_gradients(m, t);
            for (int k = 0; k < 3; ++k) {
                Vec2 sg = 2.0 * (S * hg[static_cast<std::size_t>(k)]);
                bs[2 * tr[static_cast<std::size_t>(k)]] += sg.x();
                bs[2 * tr[static_cast<std::size_t>(k)] + 1] += sg.y();
            }
        }
        s.b -= (tau * a.spec.theta) * bs;
    }
    return s;
}

/// Residual of a candidate in-plane state against the step system; equals
/// tau times the gradient of the quadratic merit of the u step.
inline VecX u_residual(const USystem& s, const VecX& u) { return s.A * u - s.b; }

inline double u_merit(const EnergyAssembly& a, const DktField& w, const VecX& u, const VecX& u_prev, double tau) {
    VecX du = u - u_prev;
    double val = 0.5 / tau * du.dot(a.u_metric * du);
    EnergyBreakdown e = assemble_energy_ops(u, w, a.spec, a.ops, 0.0);
    return val + e.membrane;
}

/// Directional mean curvatures (area-weighted element averages of the
/// discrete-hessian diagonal) and the in-plane symmetry quotient.
inline Diagnostics diagnostics(const DktField& w, const VecX& u, const std::vector<DktElementOps>& ops) {
    const Triangulation& m = *w.mesh;
    Diagnostics d;
    double total = 0, s1 = 0, s2 = 0;
    for (int t = 0; t < m.triangle_count(); ++t) {
        Mat2 avg = discrete_hessian(w, t, ops[static_cast<std::size_t>(t)]).average();
        double A = ops[static_cast<std::size_t>(t)].area;
        total += A;
        s1 += A * avg(0, 0);
        s2 += A * avg(1, 1);
    }
    d.mean_curv_1 = s1 / total;
    d.mean_curv_2 = s2 / total;
    double max1 = -std::numeric_limits<double>::infinity(), min1 = -max1;
    double max2 = max1, min2 = min1;
    for (int i = 0; i < m.node_count(); ++i) {
        max1 = std::max(max1, u[2 * i]);
        min1 = std::min(min1, u[2 * i]);
        max2 = std::max(max2, u[2 * i + 1]);
        min2 = std::min(min2, u[2 * i + 1]);
    }
    double den = max2 - min2;
    if (std::abs(den) >= 1e-14) {
        d.q_sym = (max1 - min1) / den;
        d.q_sym_defined = true;
    }
    return d;
}

inline VecX field_to_vec(const P1VectorField& u) {
    VecX v(2 * u.values.rows());
    for (int i = 0; i < u.values.rows(); ++i) {
        v[2 * i] = u.values(i, 0);
        v[2 * i + 1] = u.values(i, 1);
    }
    return v;
}

inline P1VectorField vec_to_field(const Triangulation& m, const VecX& v) {
    P1VectorField u = P1VectorField::zero(m);
    for (int i = 0; i < m.node_count(); ++i) u.values.row(i) << v[2 * i], v[2 * i + 1];
    return u;
}

}  // namespace fvk
