#include <doctest.h>

#include "fvk/fem_dkt.hpp"
#include "fvk/quadrature.hpp"
#include "oracles.hpp"

#include <cmath>
#include <iostream>
#include <random>

using namespace fvk;
using fvk::test::ReducedCubic;

namespace {

Triangulation single_triangle(Vec2 a, Vec2 b, Vec2 c) { return build_triangulation({a, b, c}, {{0, 1, 2}}); }

double lsq_slope(const std::vector<double>& h, const std::vector<double>& e) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(h.size());
    for (int i = 0; i < n; ++i) {
        double x = std::log(h[static_cast<std::size_t>(i)]);
        double y = std::log(e[static_cast<std::size_t>(i)]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("edge tangential derivative formula agrees with the cubic edge trace") {
    // brute-force verification of
    //   theta(z_S).t = 3/(2|S|) (w_j - w_i) - 1/4 (g_i + g_j).t
    // against the reduced cubic reconstructed in monomials
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> dist(-1, 1);
    for (int rep = 0; rep < 20; ++rep) {
        std::array<Vec2, 3> v = {Vec2(dist(rng), dist(rng)), Vec2(dist(rng), dist(rng)), Vec2(dist(rng), dist(rng))};
        double area = 0.5 * ((v[1] - v[0]).x() * (v[2] - v[0]).y() - (v[1] - v[0]).y() * (v[2] - v[0]).x());
        if (std::abs(area) < 0.1) continue;
        Vec9 dofs;
        for (int i = 0; i < 9; ++i) dofs[i] = dist(rng);
        ReducedCubic p = ReducedCubic::fit(v, dofs);
        const int ev[3][2] = {{0, 1}, {1, 2}, {2, 0}};
        for (int e = 0; e < 3; ++e) {
            int i = ev[e][0], j = ev[e][1];
            Vec2 d = v[static_cast<std::size_t>(j)] - v[static_cast<std::size_t>(i)];
            double L = d.norm();
            Vec2 tau = d / L;
            Vec2 mid = 0.5 * (v[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(j)]);
            Vec2 gi(dofs[3 * i + 1], dofs[3 * i + 2]);
            Vec2 gj(dofs[3 * j + 1], dofs[3 * j + 2]);
            double formula = 1.5 / L * (dofs[3 * j] - dofs[3 * i]) - 0.25 * (gi + gj).dot(tau);
            CHECK(p.grad(mid).dot(tau) == doctest::Approx(formula).epsilon(1e-9));
        }
    }

    // the frozen example: unit edge, values 0 and 1, zero gradients
    Triangulation m = single_triangle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1));
    auto ops = build_discrete_gradient(m, 0);
    Vec9 d = Vec9::Zero();
    d[3] = 1.0;  // w = 1 at vertex 1
    Eigen::Matrix<double, 12, 1> theta = ops.G * d;
    Vec2 mid01(theta[6], theta[7]);
    CHECK(mid01.dot(Vec2(1, 0)) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("discrete gradient satisfies the defining vertex and midpoint conditions") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> dist(-1, 1);
    Triangulation m = single_triangle(Vec2(0.05, -0.1), Vec2(1.2, 0.2), Vec2(0.3, 0.9));
    auto ops = build_discrete_gradient(m, 0);
    auto v = fvk::test::triangle_vertices(m, 0);
    for (int rep = 0; rep < 10; ++rep) {
        Vec9 dofs;
        for (int i = 0; i < 9; ++i) dofs[i] = dist(rng);
        Eigen::Matrix<double, 12, 1> theta = ops.G * dofs;
        // (a) vertex interpolation
        for (int i = 0; i < 3; ++i) {
            CHECK(theta[2 * i] == doctest::Approx(dofs[3 * i + 1]).epsilon(1e-14));
            CHECK(theta[2 * i + 1] == doctest::Approx(dofs[3 * i + 2]).epsilon(1e-14));
        }
        // (b) normal components at midpoints are endpoint averages
        const int ev[3][2] = {{0, 1}, {1, 2}, {2, 0}};
        for (int e = 0; e < 3; ++e) {
            int i = ev[e][0], j = ev[e][1];
            Vec2 tau = (v[static_cast<std::size_t>(j)] - v[static_cast<std::size_t>(i)]).normalized();
            Vec2 nrm(tau.y(), -tau.x());
            Vec2 gi(dofs[3 * i + 1], dofs[3 * i + 2]);
            Vec2 gj(dofs[3 * j + 1], dofs[3 * j + 2]);
            Vec2 th(theta[2 * (3 + e)], theta[2 * (3 + e) + 1]);
            CHECK(th.dot(nrm) == doctest::Approx(0.5 * (gi + gj).dot(nrm)).epsilon(1e-12));
            // (c) tangential components from the cubic trace
            ReducedCubic p = ReducedCubic::fit(v, dofs);
            Vec2 mid = 0.5 * (v[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(j)]);
            CHECK(th.dot(tau) == doctest::Approx(p.grad(mid).dot(tau)).epsilon(1e-9));
        }
    }
}

TEST_CASE("affine deflections give constant theta and zero discrete hessian") {
    Triangulation m = make_disc_mesh(1.0, 0.6);
    Vec2 b(0.7, -0.4);
    DktField w = DktField::interpolate(
        m, [&](Vec2 x) { return 0.3 + b.dot(x); }, [&](Vec2) { return b; });
    auto ops = build_all_element_ops(m);
    for (int t = 0; t < m.triangle_count(); ++t) {
        auto vals = discrete_gradient_values(w, t, ops[static_cast<std::size_t>(t)]);
        for (const auto& th : vals) CHECK((th - b).norm() <= 1e-13);
        auto h = discrete_hessian(w, t, ops[static_cast<std::size_t>(t)]);
        for (const auto& H : h.at_midpoints) CHECK(H.norm() <= 1e-12);
    }
}

TEST_CASE("quadratic deflections are reproduced exactly") {
    // theta(z) = grad w(z) at vertices and w = x1^2 has theta = (2 x1, 0)
    Triangulation ref = single_triangle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1));
    DktField w = DktField::interpolate(
        ref, [](Vec2 x) { return x.x() * x.x(); }, [](Vec2 x) { return Vec2(2 * x.x(), 0); });
    auto ops = build_discrete_gradient(ref, 0);
    auto vals = discrete_gradient_values(w, 0, ops);
    const Vec2 nodes[6] = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(0.5, 0), Vec2(0.5, 0.5), Vec2(0, 0.5)};
    for (int a = 0; a < 6; ++a) {
        CHECK(vals[static_cast<std::size_t>(a)].x() == doctest::Approx(2 * nodes[a].x()).epsilon(1e-13));
        CHECK(std::abs(vals[static_cast<std::size_t>(a)].y()) <= 1e-13);
    }

    // w = |x|^2/2 on an arbitrary triangle: element-average discrete hessian is I
    Triangulation tri = single_triangle(Vec2(-0.3, 0.1), Vec2(0.9, -0.2), Vec2(0.4, 1.1));
    DktField q = DktField::interpolate(
        tri, [](Vec2 x) { return 0.5 * x.squaredNorm(); }, [](Vec2 x) { return x; });
    auto o2 = build_discrete_gradient(tri, 0);
    Mat2 avg = discrete_hessian(q, 0, o2).average();
    CHECK((avg - Mat2::Identity()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("H rows differentiate the quadratic field produced by G") {
    Triangulation m = single_triangle(Vec2(0.0, 0.0), Vec2(1.1, 0.3), Vec2(0.2, 0.9));
    auto ops = build_discrete_gradient(m, 0);
    std::mt19937 rng(9);
    DktField w = fvk::test::random_dkt_field(m, rng);
    auto v = fvk::test::triangle_vertices(m, 0);
    Mat2 J;
    J.col(0) = v[1] - v[0];
    J.col(1) = v[2] - v[0];
    Mat2 Jinv = J.inverse();
    auto theta_at_xy = [&](Vec2 x) {
        Vec2 xi = Jinv * (x - v[0]);
        return discrete_gradient_at(w, 0, ops, {1.0 - xi.x() - xi.y(), xi.x(), xi.y()});
    };
    const std::array<std::array<double, 3>, 3> mids = {{{0.5, 0.5, 0}, {0, 0.5, 0.5}, {0.5, 0, 0.5}}};
    double eps = 1e-6;
    for (int qp = 0; qp < 3; ++qp) {
        Vec2 x = fvk::test::barycentric_point(v, mids[static_cast<std::size_t>(qp)]);
        Mat2 H = unflatten(ops.H[static_cast<std::size_t>(qp)] * element_dofs(w, 0));
        for (int c = 0; c < 2; ++c) {
            Vec2 dxc = Vec2::Zero();
            dxc[c] = eps;
            Vec2 fd = (theta_at_xy(x + dxc) - theta_at_xy(x - dxc)) / (2 * eps);
            CHECK((H.col(c) - fd).norm() <= 1e-7);
        }
    }
}

TEST_CASE("interpolation samples values and gradients exactly") {
    Triangulation m = make_square_mesh(1.0, 0.5);
    DktField z = DktField::zero(m);
    CHECK(z.value.norm() == 0.0);
    CHECK(z.grad.norm() == 0.0);

    DktField wd = DktField::interpolate(
        m, [](Vec2 x) { return -0.5 * (x.y() * x.y() - 1.0); }, [](Vec2 x) { return Vec2(0.0, -x.y()); });
    int n00 = m.nearest_node(Vec2(0, 0));
    int n01 = m.nearest_node(Vec2(0, 1));
    CHECK(wd.value[n00] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(wd.grad.row(n00).norm() == 0.0);
    CHECK(wd.value[n01] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(wd.grad(n01, 0) == 0.0);
    CHECK(wd.grad(n01, 1) == doctest::Approx(-1.0).epsilon(1e-15));

    DktField xy = DktField::interpolate(
        m, [](Vec2 x) { return x.x() * x.y(); }, [](Vec2 x) { return Vec2(x.y(), x.x()); });
    for (int i = 0; i < m.node_count(); ++i) {
        CHECK(xy.grad(i, 0) == m.nodes[static_cast<std::size_t>(i)].y());
        CHECK(xy.grad(i, 1) == m.nodes[static_cast<std::size_t>(i)].x());
    }
}

TEST_CASE("discrete gradient and hessian converge at second and first order") {
    auto wf = [](Vec2 x) { return std::sin(x.x()) * std::sin(x.y()); };
    auto gf = [](Vec2 x) { return Vec2(std::cos(x.x()) * std::sin(x.y()), std::sin(x.x()) * std::cos(x.y())); };
    auto hf = [](Vec2 x) {
        Mat2 H;
        H << -std::sin(x.x()) * std::sin(x.y()), std::cos(x.x()) * std::cos(x.y()),
            std::cos(x.x()) * std::cos(x.y()), -std::sin(x.x()) * std::sin(x.y());
        return H;
    };
    auto rule = duffy_rule(4);
    std::vector<double> hs = {0.2, 0.1, 0.05, 0.025};
    std::vector<double> e_grad, e_hess;
    for (double h : hs) {
        Triangulation m = make_square_mesh(1.0, h);
        DktField w = DktField::interpolate(m, wf, gf);
        auto ops = build_all_element_ops(m);
        double s1 = 0, s2 = 0;
        for (int t = 0; t < m.triangle_count(); ++t) {
            auto v = fvk::test::triangle_vertices(m, t);
            auto eh = discrete_hessian(w, t, ops[static_cast<std::size_t>(t)]);
            double At = m.area(t);
            for (const auto& qp : rule) {
                Vec2 x = fvk::test::barycentric_point(v, qp.lambda);
                Vec2 dg = discrete_gradient_at(w, t, ops[static_cast<std::size_t>(t)], qp.lambda) - gf(x);
                Mat2 dh = discrete_hessian_at(eh, qp.lambda) - hf(x);
                s1 += 2.0 * At * qp.weight * dg.squaredNorm();
                s2 += 2.0 * At * qp.weight * dh.cwiseProduct(dh).sum();
            }
        }
        e_grad.push_back(std::sqrt(s1));
        e_hess.push_back(std::sqrt(s2));
    }
    double slope_grad = lsq_slope(hs, e_grad);
    double slope_hess = lsq_slope(hs, e_hess);
    std::cout << "[dkt] gradient rate " << slope_grad << ", hessian rate " << slope_hess << "\n";
    CHECK(slope_grad == doctest::Approx(2.0).epsilon(0.125));
    CHECK(slope_hess == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("norm equivalence and consistency of the discrete gradient") {
    auto rule = duffy_rule(4);
    std::mt19937 rng(2024);
    double prev_c = -1, prev_ratio = -1;
    for (double h : {0.2, 0.1}) {
        Triangulation m = make_square_mesh(1.0, h);
        auto ops = build_all_element_ops(m);
        double cmax = 1.0;
        double consistency = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            DktField w = fvk::test::random_dkt_field(m, rng);
            double n_true = 0, n_disc = 0;
            for (int t = 0; t < m.triangle_count(); ++t) {
                auto v = fvk::test::triangle_vertices(m, t);
                ReducedCubic p = ReducedCubic::fit(v, element_dofs(w, t));
                double At = m.area(t);
                double loc_true = 0, loc_disc = 0, loc_diff = 0, loc_d2 = 0;
                for (const auto& qp : rule) {
                    Vec2 x = fvk::test::barycentric_point(v, qp.lambda);
                    Vec2 gt = p.grad(x);
                    Vec2 gd = discrete_gradient_at(w, t, ops[static_cast<std::size_t>(t)], qp.lambda);
                    Mat2 H = p.hess(x);
                    loc_true += 2.0 * At * qp.weight * gt.squaredNorm();
                    loc_disc += 2.0 * At * qp.weight * gd.squaredNorm();
                    loc_diff += 2.0 * At * qp.weight * (gd - gt).squaredNorm();
                    loc_d2 += 2.0 * At * qp.weight * H.cwiseProduct(H).sum();
                }
                n_true += loc_true;
                n_disc += loc_disc;
                if (loc_d2 > 1e-24) {
                    double r = std::sqrt(loc_diff) / (m.diameter(t) * std::sqrt(loc_d2));
                    consistency = std::max(consistency, r);
                }
            }
            double ratio = std::sqrt(n_true / n_disc);
            cmax = std::max({cmax, ratio, 1.0 / ratio});
        }
        std::cout << "[dkt] h=" << h << " norm-equivalence c=" << cmax << " consistency c=" << consistency << "\n";
        CHECK(cmax < 10.0);
        CHECK(consistency < 10.0);
        if (prev_c > 0) {
            CHECK(cmax <= 1.25 * prev_c);
            CHECK(consistency <= 1.25 * prev_ratio);
        }
        prev_c = cmax;
        prev_ratio = consistency;
    }
}

TEST_CASE("clamped bending matrix is positive definite") {
    for (double h : {0.2, 0.1}) {
        Triangulation m = make_square_mesh(1.0, h);
        auto ops = build_all_element_ops(m);
        WDofMap map = WDofMap::build(m, false);
        std::vector<Triplet> trip;
        for (int t = 0; t < m.triangle_count(); ++t) {
            auto ids = element_dof_ids(m, map, t);
            const auto& op = ops[static_cast<std::size_t>(t)];
            Eigen::Matrix<double, 9, 9> K = Eigen::Matrix<double, 9, 9>::Zero();
            for (int q = 0; q < 3; ++q)
                K += (op.area / 3.0) * op.H[static_cast<std::size_t>(q)].transpose() * op.H[static_cast<std::size_t>(q)];
            for (int i = 0; i < 9; ++i)
                for (int j = 0; j < 9; ++j)
                    trip.emplace_back(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)], K(i, j));
        }
        SparseMat K(map.n_dofs, map.n_dofs);
        K.setFromTriplets(trip.begin(), trip.end());

        // clamp the left edge (positive-measure boundary part)
        std::vector<char> fixed(static_cast<std::size_t>(map.n_dofs), 0);
        for (int i = 0; i < m.node_count(); ++i)
            if (m.nodes[static_cast<std::size_t>(i)].x() == -1.0)
                for (int d : map.dofs(i, 1)) fixed[static_cast<std::size_t>(d)] = 1;
        std::vector<int> free;
        for (int d = 0; d < map.n_dofs; ++d)
            if (!fixed[static_cast<std::size_t>(d)]) free.push_back(d);
        Eigen::MatrixXd dense = Eigen::MatrixXd(K);
        Eigen::MatrixXd Kd(static_cast<int>(free.size()), static_cast<int>(free.size()));
        for (std::size_t i = 0; i < free.size(); ++i)
            for (std::size_t j = 0; j < free.size(); ++j)
                Kd(static_cast<int>(i), static_cast<int>(j)) = dense(free[i], free[j]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Kd, Eigen::EigenvaluesOnly);
        double lmin = es.eigenvalues().minCoeff();
        std::cout << "[dkt] h=" << h << " clamped bending lambda_min=" << lmin << "\n";
        CHECK(lmin > 0.0);
    }
}

TEST_CASE("degenerate triangles are rejected by the element builder") {
    Triangulation m = single_triangle(Vec2(0, 0), Vec2(1, 0), Vec2(0, 1));
    m.nodes[2] = Vec2(2e-15, 2e-15);  // collapse after construction
    CHECK_THROWS_AS(build_discrete_gradient(m, 0), ConfigError);
}

TEST_CASE("crease slots keep value single-valued with independent gradients") {
    CreaseSpec cs;
    cs.kind = CreaseSpec::Kind::straight;
    cs.polyline = {Vec2(0, -1), Vec2(0, 1)};
    Triangulation m = make_square_mesh(1.0, 0.5, cs);
    WDofMap map = WDofMap::build(m, true);
    CHECK(map.split);
    CHECK(map.value_pairs.size() == m.crease_nodes.size());
    CHECK(map.n_dofs == 3 * (m.node_count() + static_cast<int>(m.crease_nodes.size())));

    DktField f = DktField::zero(m, true);
    int cn = m.crease_nodes[1];
    f.value[cn] = 2.0;
    f.set_gradient(cn, 1, Vec2(1, 0));
    f.set_gradient(cn, 2, Vec2(0, 1));
    CHECK(f.gradient(cn, 1) == Vec2(1, 0));
    CHECK(f.gradient(cn, 2) == Vec2(0, 1));

    VecX x = to_algebraic(f, map);
    double jump = -1;
    DktField g = from_algebraic(m, map, x, &jump);
    CHECK(jump == 0.0);
    CHECK(g.value[cn] == 2.0);
    CHECK(g.gradient(cn, 1) == Vec2(1, 0));
    CHECK(g.gradient(cn, 2) == Vec2(0, 1));

    // off the crease both slots agree
    int reg = m.nearest_node(Vec2(0.75, 0.75));
    f.set_gradient(reg, 2, Vec2(3, 4));
    CHECK(f.gradient(reg, 1) == Vec2(3, 4));
}
