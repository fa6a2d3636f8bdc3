#pragma once

#include "fvk/flow.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fvk::io {

inline std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("file parse error: " + what);
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
}

}  // namespace detail

/// Plain-text mesh format: a header line, a node table (coordinates and
/// boundary/crease markers), a triangle table (vertex ids and subdomain tag)
/// and the ordered crease path. Coordinates use full decimal precision.
inline void write_mesh(const std::string& path, const Triangulation& m) {
    auto out = detail::open_out(path);
    out << "fvkmesh 1\n";
    out << "nodes " << m.node_count() << "\n";
    for (int i = 0; i < m.node_count(); ++i)
        out << fmt_full(m.nodes[static_cast<std::size_t>(i)].x()) << ' '
            << fmt_full(m.nodes[static_cast<std::size_t>(i)].y()) << ' '
            << int(m.boundary_node[static_cast<std::size_t>(i)]) << ' '
            << int(m.crease_node[static_cast<std::size_t>(i)]) << "\n";
    out << "triangles " << m.triangle_count() << "\n";
    for (int t = 0; t < m.triangle_count(); ++t) {
        const auto& tr = m.triangles[static_cast<std::size_t>(t)];
        out << tr[0] << ' ' << tr[1] << ' ' << tr[2] << ' ' << m.subdomain[static_cast<std::size_t>(t)] << "\n";
    }
    out << "crease_path " << m.crease_path.size() << "\n";
    for (std::size_t i = 0; i < m.crease_path.size(); ++i)
        out << m.crease_path[i] << (i + 1 < m.crease_path.size() ? ' ' : '\n');
    if (m.crease_path.empty()) out << "\n";
}

inline Triangulation read_mesh(const std::string& path) {
    auto in = detail::open_in(path);
    std::string tag;
    int version = 0;
    in >> tag >> version;
    detail::require(tag == "fvkmesh" && version == 1, path + ": expected 'fvkmesh 1' header");
    int n = 0;
    in >> tag >> n;
    detail::require(tag == "nodes" && n > 0, path + ": node table");
    std::vector<Vec2> nodes(static_cast<std::size_t>(n));
    std::vector<int> dummy_b(static_cast<std::size_t>(n)), crease_flag(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        in >> nodes[static_cast<std::size_t>(i)].x() >> nodes[static_cast<std::size_t>(i)].y() >>
            dummy_b[static_cast<std::size_t>(i)] >> crease_flag[static_cast<std::size_t>(i)];
    int mcount = 0;
    in >> tag >> mcount;
    detail::require(tag == "triangles" && mcount > 0, path + ": triangle table");
    std::vector<std::array<int, 3>> tris(static_cast<std::size_t>(mcount));
    std::vector<int> tags(static_cast<std::size_t>(mcount));
    for (int t = 0; t < mcount; ++t)
        in >> tris[static_cast<std::size_t>(t)][0] >> tris[static_cast<std::size_t>(t)][1] >>
            tris[static_cast<std::size_t>(t)][2] >> tags[static_cast<std::size_t>(t)];
    std::size_t npath = 0;
    in >> tag >> npath;
    detail::require(tag == "crease_path", path + ": crease path");
    std::vector<int> pathv(npath);
    for (std::size_t i = 0; i < npath; ++i) in >> pathv[i];
    detail::require(static_cast<bool>(in), path + ": truncated file");
    CreaseSpec cs;
    if (!pathv.empty()) {
        cs.kind = CreaseSpec::Kind::straight;  // kind is not semantic after meshing
        for (int i : pathv) cs.polyline.push_back(nodes[static_cast<std::size_t>(i)]);
    }
    return build_triangulation(std::move(nodes), std::move(tris), std::move(tags), std::move(pathv), std::move(cs));
}

/// Self-contained solution snapshot: the mesh tables plus per-node fields
/// (deflection value and gradients, in-plane displacement) and the
/// per-triangle bending energy density |grad grad_h w - alpha I|.
inline void write_state(const std::string& path, const P1VectorField& u, const DktField& w, const ProblemSpec& spec,
                        const std::vector<DktElementOps>& ops) {
    const Triangulation& m = *w.mesh;
    auto out = detail::open_out(path);
    out << "fvkstate 1\n";
    out << "nodes " << m.node_count() << "\n";
    for (int i = 0; i < m.node_count(); ++i) {
        out << fmt_full(m.nodes[static_cast<std::size_t>(i)].x()) << ' '
            << fmt_full(m.nodes[static_cast<std::size_t>(i)].y()) << ' '
            << int(m.boundary_node[static_cast<std::size_t>(i)]) << ' '
            << int(m.crease_node[static_cast<std::size_t>(i)]) << ' ' << fmt_full(w.value[i]) << ' '
            << fmt_full(w.grad(i, 0)) << ' ' << fmt_full(w.grad(i, 1)) << ' ' << fmt_full(w.grad2(i, 0)) << ' '
            << fmt_full(w.grad2(i, 1)) << ' ' << fmt_full(u.values(i, 0)) << ' ' << fmt_full(u.values(i, 1)) << "\n";
    }
    out << "triangles " << m.triangle_count() << "\n";
    for (int t = 0; t < m.triangle_count(); ++t) {
        const auto& tr = m.triangles[static_cast<std::size_t>(t)];
        Mat2 avg = discrete_hessian(w, t, ops[static_cast<std::size_t>(t)]).average();
        double dens = (avg - spec.alpha_of(t) * Mat2::Identity()).norm();
        out << tr[0] << ' ' << tr[1] << ' ' << tr[2] << ' ' << m.subdomain[static_cast<std::size_t>(t)] << ' '
            << fmt_full(dens) << "\n";
    }
    out << "crease_path " << m.crease_path.size() << "\n";
    for (std::size_t i = 0; i < m.crease_path.size(); ++i)
        out << m.crease_path[i] << (i + 1 < m.crease_path.size() ? ' ' : '\n');
    if (m.crease_path.empty()) out << "\n";
}

struct StateSnapshot {
    Triangulation mesh;
    DktField w;
    P1VectorField u;
    std::vector<double> bending_density;
};

inline StateSnapshot read_state(const std::string& path) {
    auto in = detail::open_in(path);
    std::string tag;
    int version = 0;
    in >> tag >> version;
    detail::require(tag == "fvkstate" && version == 1, path + ": expected 'fvkstate 1' header");
    int n = 0;
    in >> tag >> n;
    detail::require(tag == "nodes" && n > 0, path + ": node table");
    std::vector<Vec2> nodes(static_cast<std::size_t>(n));
    MatX2 grad(n, 2), grad2(n, 2), uvals(n, 2);
    VecX wval(n);
    std::vector<int> bflag(static_cast<std::size_t>(n)), cflag(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        in >> nodes[static_cast<std::size_t>(i)].x() >> nodes[static_cast<std::size_t>(i)].y() >>
            bflag[static_cast<std::size_t>(i)] >> cflag[static_cast<std::size_t>(i)] >> wval[i] >> grad(i, 0) >>
            grad(i, 1) >> grad2(i, 0) >> grad2(i, 1) >> uvals(i, 0) >> uvals(i, 1);
    }
    int mcount = 0;
    in >> tag >> mcount;
    detail::require(tag == "triangles" && mcount > 0, path + ": triangle table");
    std::vector<std::array<int, 3>> tris(static_cast<std::size_t>(mcount));
    std::vector<int> tags(static_cast<std::size_t>(mcount));
    std::vector<double> dens(static_cast<std::size_t>(mcount));
    for (int t = 0; t < mcount; ++t)
        in >> tris[static_cast<std::size_t>(t)][0] >> tris[static_cast<std::size_t>(t)][1] >>
            tris[static_cast<std::size_t>(t)][2] >> tags[static_cast<std::size_t>(t)] >> dens[static_cast<std::size_t>(t)];
    std::size_t npath = 0;
    in >> tag >> npath;
    detail::require(tag == "crease_path", path + ": crease path");
    std::vector<int> pathv(npath);
    for (std::size_t i = 0; i < npath; ++i) in >> pathv[i];
    detail::require(static_cast<bool>(in), path + ": truncated file");

    StateSnapshot s;
    CreaseSpec cs;
    if (!pathv.empty()) {
        cs.kind = CreaseSpec::Kind::straight;
        for (int i : pathv) cs.polyline.push_back(nodes[static_cast<std::size_t>(i)]);
    }
    s.mesh = build_triangulation(std::move(nodes), std::move(tris), std::move(tags), std::move(pathv), std::move(cs));
    s.w = DktField::zero(s.mesh, !s.mesh.crease_nodes.empty());
    s.w.value = wval;
    s.w.grad = grad;
    s.w.grad2 = grad2;
    s.u = P1VectorField::zero(s.mesh);
    s.u.values = uvals;
    s.bending_density = std::move(dens);
    return s;
}

/// Legacy-format VTK unstructured grid of the deformed surface
/// (x + su*u1, y + su*u2, sw*w) with deflection, displacement and bending
/// density channels; readable by standard visualization tools.
inline void write_vtk_surface(const std::string& path, const P1VectorField& u, const DktField& w,
                              const ProblemSpec& spec, const std::vector<DktElementOps>& ops, double scale_u = 1.0,
                              double scale_w = 1.0) {
    const Triangulation& m = *w.mesh;
    auto out = detail::open_out(path);
    out << "# vtk DataFile Version 3.0\ndeformed plate surface\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << m.node_count() << " double\n";
    for (int i = 0; i < m.node_count(); ++i) {
        Vec2 x = m.nodes[static_cast<std::size_t>(i)];
        out << fmt_full(x.x() + scale_u * u.values(i, 0)) << ' ' << fmt_full(x.y() + scale_u * u.values(i, 1)) << ' '
            << fmt_full(scale_w * w.value[i]) << "\n";
    }
    out << "CELLS " << m.triangle_count() << ' ' << 4 * m.triangle_count() << "\n";
    for (const auto& tr : m.triangles) out << "3 " << tr[0] << ' ' << tr[1] << ' ' << tr[2] << "\n";
    out << "CELL_TYPES " << m.triangle_count() << "\n";
    for (int t = 0; t < m.triangle_count(); ++t) out << "5\n";
    out << "POINT_DATA " << m.node_count() << "\nSCALARS deflection double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < m.node_count(); ++i) out << fmt_full(w.value[i]) << "\n";
    out << "VECTORS displacement double\n";
    for (int i = 0; i < m.node_count(); ++i)
        out << fmt_full(u.values(i, 0)) << ' ' << fmt_full(u.values(i, 1)) << " 0\n";
    out << "CELL_DATA " << m.triangle_count() << "\nSCALARS bending_density double 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < m.triangle_count(); ++t) {
        Mat2 avg = discrete_hessian(w, t, ops[static_cast<std::size_t>(t)]).average();
        out << fmt_full((avg - spec.alpha_of(t) * Mat2::Identity()).norm()) << "\n";
    }
}

/// Per-iteration flow records.
inline void write_flow_csv(const std::string& path, const FlowState& state) {
    auto out = detail::open_out(path);
    out << "k,tau,force_scale,E_bending,E_membrane,E_force,E_total,dtw_norm,dtu_norm,newton_solves,"
           "newton_residual,mean_curv_1,mean_curv_2,q_sym,crease_jump,w_track\n";
    for (const auto& r : state.history) {
        double last_res = r.newton_residuals.empty() ? 0.0 : r.newton_residuals.back();
        out << r.k << ',' << fmt_full(r.tau) << ',' << fmt_full(r.force_scale) << ',' << fmt_full(r.energy.bending)
            << ',' << fmt_full(r.energy.membrane) << ',' << fmt_full(r.energy.force) << ','
            << fmt_full(r.energy.total) << ',' << fmt_full(r.dtw_norm) << ',' << fmt_full(r.dtu_norm) << ','
            << r.newton_solves << ',' << fmt_full(last_res) << ',' << fmt_full(r.diag.mean_curv_1) << ','
            << fmt_full(r.diag.mean_curv_2) << ',' << fmt_full(r.diag.q_sym) << ',' << fmt_full(r.crease_jump) << ','
            << fmt_full(r.w_track) << "\n";
    }
}

struct SweepRow {
    double param = 0;
    int iterations = 0;
    bool converged = false;
    EnergyBreakdown energy;
    Diagnostics diag;
};

inline void write_sweep_csv(const std::string& path, const std::string& param_name, const std::vector<SweepRow>& rows) {
    auto out = detail::open_out(path);
    out << param_name << ",iterations,converged,E_bending,E_membrane,E_force,E_total,mean_curv_1,mean_curv_2,"
           "curv_split,q_sym\n";
    for (const auto& r : rows)
        out << fmt_full(r.param) << ',' << r.iterations << ',' << int(r.converged) << ',' << fmt_full(r.energy.bending)
            << ',' << fmt_full(r.energy.membrane) << ',' << fmt_full(r.energy.force) << ',' << fmt_full(r.energy.total)
            << ',' << fmt_full(r.diag.mean_curv_1) << ',' << fmt_full(r.diag.mean_curv_2) << ','
            << fmt_full(std::abs(r.diag.mean_curv_1 - r.diag.mean_curv_2)) << ',' << fmt_full(r.diag.q_sym) << "\n";
}

inline std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot hash " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

}  // namespace fvk::io
