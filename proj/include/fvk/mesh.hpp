#pragma once

#include "fvk/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fvk {

/// Crease geometry: a curve along which the deflection gradient may jump.
/// The polyline approximates the curve; endpoints must lie on the domain
/// boundary. For `straight` only the two endpoints are needed; for `arc`
/// the polyline must be monotone in x2 and cover the full height of the
/// square so it can be traced row by row during meshing.
struct CreaseSpec {
    enum class Kind { none, straight, arc };
    Kind kind = Kind::none;
    std::vector<Vec2> polyline;
};

struct Edge {
    int a = -1, b = -1;      // endpoint node ids, a < b
    int tri[2] = {-1, -1};   // adjacent triangles; tri[1] < 0 on the boundary
    Vec2 mid = Vec2::Zero();
    Vec2 normal = Vec2::Zero();
    Vec2 tangent = Vec2::Zero();
    double length = 0;
};

struct EdgeFrame {
    Vec2 mid, normal, tangent;
};

/// Triangle mesh with oriented edges, boundary/crease markers and per-triangle
/// subdomain tags (1 everywhere, or 1/2 on the two sides of a crease).
/// Triangles are counterclockwise. Edge frames follow a fixed convention:
/// the normal points from the lower-index triangle into the higher-index one,
/// and outward on the boundary; tangents run from the lower to the higher
/// endpoint id. Immutable after construction.
struct Triangulation {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> subdomain;                   // 1-based tag per triangle
    std::vector<Edge> edges;
    std::vector<std::array<int, 3>> tri_edges;    // local edge k connects vertices (k, k+1 mod 3)
    std::vector<char> boundary_node;
    std::vector<char> crease_node;
    std::vector<int> boundary_nodes;              // ascending ids
    std::vector<int> crease_nodes;                // ascending ids
    std::vector<int> crease_path;                 // crease node ids in curve order
    CreaseSpec crease;
    double mesh_size = 0;                         // max triangle diameter

    int node_count() const { return static_cast<int>(nodes.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
    int edge_count() const { return static_cast<int>(edges.size()); }

    double area(int t) const {
        const auto& tr = triangles[static_cast<std::size_t>(t)];
        Vec2 e1 = nodes[static_cast<std::size_t>(tr[1])] - nodes[static_cast<std::size_t>(tr[0])];
        Vec2 e2 = nodes[static_cast<std::size_t>(tr[2])] - nodes[static_cast<std::size_t>(tr[0])];
        return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
    }

    Vec2 centroid(int t) const {
        const auto& tr = triangles[static_cast<std::size_t>(t)];
        return (nodes[static_cast<std::size_t>(tr[0])] + nodes[static_cast<std::size_t>(tr[1])] +
                nodes[static_cast<std::size_t>(tr[2])]) /
               3.0;
    }

    double diameter(int t) const {
        const auto& tr = triangles[static_cast<std::size_t>(t)];
        double d = 0;
        for (int k = 0; k < 3; ++k) {
            Vec2 e = nodes[static_cast<std::size_t>(tr[(k + 1) % 3])] - nodes[static_cast<std::size_t>(tr[k])];
            d = std::max(d, e.norm());
        }
        return d;
    }

    int nearest_node(const Vec2& p) const {
        int best = 0;
        double bd = (nodes[0] - p).squaredNorm();
        for (int i = 1; i < node_count(); ++i) {
            double d = (nodes[static_cast<std::size_t>(i)] - p).squaredNorm();
            if (d < bd) {
                bd = d;
                best = i;
            }
        }
        return best;
    }

    /// Signed area of the boundary polygon via Green's theorem over the
    /// triangle-oriented boundary edges.
    double boundary_area() const {
        double s = 0;
        for (const auto& e : edges) {
            if (e.tri[1] >= 0) continue;
            const auto& tr = triangles[static_cast<std::size_t>(e.tri[0])];
            // recover the triangle's traversal order of this edge
            int i = e.a, j = e.b;
            for (int k = 0; k < 3; ++k) {
                if (tr[k] == e.b && tr[(k + 1) % 3] == e.a) {
                    std::swap(i, j);
                    break;
                }
            }
            const Vec2& p = nodes[static_cast<std::size_t>(i)];
            const Vec2& q = nodes[static_cast<std::size_t>(j)];
            s += 0.5 * (p.x() * q.y() - p.y() * q.x());
        }
        return s;
    }
};

/// The per-edge (midpoint, normal, tangent) frames under the mesh's
/// deterministic orientation convention.
inline std::vector<EdgeFrame> edge_frames(const Triangulation& m) {
    std::vector<EdgeFrame> f;
    f.reserve(m.edges.size());
    for (const auto& e : m.edges) f.push_back({e.mid, e.normal, e.tangent});
    return f;
}

/// Assembles edges, frames and markers from raw node/triangle data.
/// Orientation is normalized to counterclockwise; degenerate triangles are
/// rejected.
inline Triangulation build_triangulation(std::vector<Vec2> nodes, std::vector<std::array<int, 3>> triangles,
                                         std::vector<int> subdomain = {}, std::vector<int> crease_path = {},
                                         CreaseSpec crease = {}) {
    Triangulation m;
    m.nodes = std::move(nodes);
    m.triangles = std::move(triangles);
    m.subdomain = std::move(subdomain);
    if (m.subdomain.empty()) m.subdomain.assign(m.triangles.size(), 1);
    if (m.subdomain.size() != m.triangles.size())
        throw ConfigError("build_triangulation: subdomain tag count does not match triangle count");
    m.crease = std::move(crease);
    m.crease_path = std::move(crease_path);

    double scale = 0;
    for (const auto& p : m.nodes) scale = std::max(scale, p.cwiseAbs().maxCoeff());
    // normalize orientation and sanity-check areas
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        double a = m.area(static_cast<int>(t));
        if (a < 0) {
            std::swap(m.triangles[t][1], m.triangles[t][2]);
            a = -a;
        }
        if (!(a > 1e-14 * std::max(1.0, scale * scale)))
            throw ConfigError("build_triangulation: degenerate triangle " + std::to_string(t));
    }

    // edge table keyed by sorted endpoints
    std::map<std::pair<int, int>, int> edge_of;
    m.tri_edges.assign(m.triangles.size(), {-1, -1, -1});
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            int i = m.triangles[t][static_cast<std::size_t>(k)];
            int j = m.triangles[t][static_cast<std::size_t>((k + 1) % 3)];
            auto key = std::minmax(i, j);
            auto it = edge_of.find(key);
            if (it == edge_of.end()) {
                Edge e;
                e.a = key.first;
                e.b = key.second;
                e.tri[0] = static_cast<int>(t);
                edge_of.emplace(key, static_cast<int>(m.edges.size()));
                m.tri_edges[t][static_cast<std::size_t>(k)] = static_cast<int>(m.edges.size());
                m.edges.push_back(e);
            } else {
                Edge& e = m.edges[static_cast<std::size_t>(it->second)];
                if (e.tri[1] >= 0)
                    throw ConfigError("build_triangulation: edge shared by more than two triangles");
                e.tri[1] = static_cast<int>(t);
                m.tri_edges[t][static_cast<std::size_t>(k)] = it->second;
            }
        }
    }

    // frames
    for (auto& e : m.edges) {
        const Vec2& pa = m.nodes[static_cast<std::size_t>(e.a)];
        const Vec2& pb = m.nodes[static_cast<std::size_t>(e.b)];
        e.mid = 0.5 * (pa + pb);
        Vec2 d = pb - pa;
        e.length = d.norm();
        e.tangent = d / e.length;
        Vec2 n(e.tangent.y(), -e.tangent.x());
        Vec2 ref;
        if (e.tri[1] >= 0) {
            int lo = std::min(e.tri[0], e.tri[1]);
            int hi = std::max(e.tri[0], e.tri[1]);
            ref = m.centroid(hi) - m.centroid(lo);
        } else {
            ref = e.mid - m.centroid(e.tri[0]);
        }
        e.normal = (n.dot(ref) >= 0) ? n : Vec2(-n);
    }

    // markers
    m.boundary_node.assign(m.nodes.size(), 0);
    for (const auto& e : m.edges)
        if (e.tri[1] < 0) {
            m.boundary_node[static_cast<std::size_t>(e.a)] = 1;
            m.boundary_node[static_cast<std::size_t>(e.b)] = 1;
        }
    for (int i = 0; i < m.node_count(); ++i)
        if (m.boundary_node[static_cast<std::size_t>(i)]) m.boundary_nodes.push_back(i);

    m.crease_node.assign(m.nodes.size(), 0);
    for (int i : m.crease_path) m.crease_node[static_cast<std::size_t>(i)] = 1;
    for (int i = 0; i < m.node_count(); ++i)
        if (m.crease_node[static_cast<std::size_t>(i)]) m.crease_nodes.push_back(i);

    if (!m.crease_path.empty()) {
        if (!m.boundary_node[static_cast<std::size_t>(m.crease_path.front())] ||
            !m.boundary_node[static_cast<std::size_t>(m.crease_path.back())])
            throw ConfigError("build_triangulation: crease endpoints must lie on the boundary");
    }

    m.mesh_size = 0;
    for (int t = 0; t < m.triangle_count(); ++t) m.mesh_size = std::max(m.mesh_size, m.diameter(t));
    return m;
}

namespace detail {

/// Piecewise-linear x1-coordinate of a crease path at height y.
inline double crease_x_at(const Triangulation& m, double y) {
    const auto& path = m.crease_path;
    for (std::size_t s = 0; s + 1 < path.size(); ++s) {
        const Vec2& p = m.nodes[static_cast<std::size_t>(path[s])];
        const Vec2& q = m.nodes[static_cast<std::size_t>(path[s + 1])];
        double y0 = p.y(), y1 = q.y();
        if ((y >= std::min(y0, y1) - 1e-12) && (y <= std::max(y0, y1) + 1e-12)) {
            double t = (std::abs(y1 - y0) < 1e-14) ? 0.5 : (y - y0) / (y1 - y0);
            return p.x() + t * (q.x() - p.x());
        }
    }
    // clamp outside the covered range
    const Vec2& p0 = m.nodes[static_cast<std::size_t>(path.front())];
    const Vec2& p1 = m.nodes[static_cast<std::size_t>(path.back())];
    return (std::abs(y - p0.y()) < std::abs(y - p1.y())) ? p0.x() : p1.x();
}

}  // namespace detail

/// Structured triangulation of the square [-w,w]^2 with grid spacing
/// 2w/n <= h and all cell diagonals in the same direction (southwest to
/// northeast), except where an arc crease requires the opposite diagonal.
/// A straight crease must coincide with a grid column; an arc crease is
/// traced row by row: the analytic point at each row is snapped to the
/// nearest column and that node is moved onto the curve.
inline Triangulation make_square_mesh(double half_width, double h, const CreaseSpec& crease = {}) {
    if (!(half_width > 0) || !(h > 0)) throw ConfigError("make_square_mesh: half_width and h must be positive");
    const int n = std::max(1, static_cast<int>(std::ceil(2.0 * half_width / h - 1e-12)));
    auto coord = [&](int j) { return (2.0 * j - n) * half_width / n; };
    auto id = [&](int i, int j) { return i * (n + 1) + j; };

    std::vector<Vec2> nodes(static_cast<std::size_t>((n + 1) * (n + 1)));
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) nodes[static_cast<std::size_t>(id(i, j))] = Vec2(coord(j), coord(i));

    std::vector<int> crease_col;  // per row, or empty
    std::vector<int> path;
    if (crease.kind == CreaseSpec::Kind::straight) {
        if (crease.polyline.size() < 2) throw ConfigError("make_square_mesh: straight crease needs two endpoints");
        const double cx = crease.polyline.front().x();
        for (const auto& p : crease.polyline)
            if (std::abs(p.x() - cx) > 1e-12)
                throw ConfigError("make_square_mesh: straight crease must be a vertical line");
        const double spacing = 2.0 * half_width / n;
        int jc = static_cast<int>(std::llround((cx + half_width) / spacing));
        if (jc <= 0 || jc >= n || std::abs(coord(jc) - cx) > 1e-9 * std::max(1.0, half_width))
            throw ConfigError("make_square_mesh: straight crease at x1=" + std::to_string(cx) +
                              " does not coincide with an interior grid column; adjust h");
        crease_col.assign(static_cast<std::size_t>(n + 1), jc);
    } else if (crease.kind == CreaseSpec::Kind::arc) {
        if (crease.polyline.size() < 2) throw ConfigError("make_square_mesh: arc crease polyline too short");
        // the polyline must be a graph over x2 covering the full height
        auto poly = crease.polyline;
        if (poly.front().y() > poly.back().y()) std::reverse(poly.begin(), poly.end());
        for (std::size_t s = 0; s + 1 < poly.size(); ++s)
            if (!(poly[s + 1].y() > poly[s].y() - 1e-14))
                throw ConfigError("make_square_mesh: arc crease polyline must be monotone in x2");
        if (poly.front().y() > -half_width + 1e-9 || poly.back().y() < half_width - 1e-9)
            throw ConfigError("make_square_mesh: arc crease must span the full square height");
        auto x_at = [&](double y) {
            for (std::size_t s = 0; s + 1 < poly.size(); ++s) {
                if (y <= poly[s + 1].y() + 1e-14) {
                    double dy = poly[s + 1].y() - poly[s].y();
                    double t = dy < 1e-14 ? 0.5 : (y - poly[s].y()) / dy;
                    return poly[s].x() + t * (poly[s + 1].x() - poly[s].x());
                }
            }
            return poly.back().x();
        };
        const double spacing = 2.0 * half_width / n;
        crease_col.assign(static_cast<std::size_t>(n + 1), -1);
        for (int i = 0; i <= n; ++i) {
            double x = x_at(coord(i));
            int j = static_cast<int>(std::llround((x + half_width) / spacing));
            if (j <= 0 || j >= n)
                throw ConfigError("make_square_mesh: arc crease leaves the interior column range");
            if (std::abs(x - coord(j)) > 0.5 * spacing + 1e-12)
                throw ConfigError("make_square_mesh: arc crease not representable at this h");
            crease_col[static_cast<std::size_t>(i)] = j;
            nodes[static_cast<std::size_t>(id(i, j))].x() = x;
        }
        for (int i = 0; i < n; ++i)
            if (std::abs(crease_col[static_cast<std::size_t>(i + 1)] - crease_col[static_cast<std::size_t>(i)]) > 1)
                throw ConfigError("make_square_mesh: arc crease jumps more than one column per row; refine h");
    }

    if (!crease_col.empty())
        for (int i = 0; i <= n; ++i) path.push_back(id(i, crease_col[static_cast<std::size_t>(i)]));

    // cell diagonals: default southwest-northeast; flip where the crease
    // steps one column to the left between consecutive rows
    std::vector<char> flip(static_cast<std::size_t>(n * n), 0);
    if (!crease_col.empty()) {
        for (int i = 0; i < n; ++i) {
            int j0 = crease_col[static_cast<std::size_t>(i)];
            int j1 = crease_col[static_cast<std::size_t>(i + 1)];
            if (j1 == j0 - 1) flip[static_cast<std::size_t>(i * n + j1)] = 1;
        }
    }

    std::vector<std::array<int, 3>> tris;
    tris.reserve(static_cast<std::size_t>(2 * n * n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            int sw = id(i, j), se = id(i, j + 1), ne = id(i + 1, j + 1), nw = id(i + 1, j);
            if (!flip[static_cast<std::size_t>(i * n + j)]) {
                tris.push_back({sw, se, ne});
                tris.push_back({sw, ne, nw});
            } else {
                tris.push_back({sw, se, nw});
                tris.push_back({se, ne, nw});
            }
        }
    }

    Triangulation m = build_triangulation(std::move(nodes), std::move(tris), {}, std::move(path), crease);
    if (!m.crease_path.empty()) {
        for (int t = 0; t < m.triangle_count(); ++t) {
            Vec2 c = m.centroid(t);
            m.subdomain[static_cast<std::size_t>(t)] = (c.x() < detail::crease_x_at(m, c.y())) ? 1 : 2;
        }
    }
    return m;
}

/// Concentric-ring triangulation of the disc B_radius(0): node rings at radii
/// j*radius/m with the angular spacing chosen from the target size, adjacent
/// rings stitched by an angular merge. Deterministic, contains the origin
/// node, and the ring count m grows until the largest element diameter stays
/// below h. Ring node counts are generically coprime and the angular spacing
/// carries a weak twofold modulation, so the mesh has no rotational symmetry
/// and a coherent anisotropy axis; symmetry-breaking instabilities of flows
/// run on it grow from truncation level instead of stalling on symmetric
/// saddle configurations.
inline Triangulation make_disc_mesh(double radius, double h) {
    if (!(radius > 0) || !(h > 0)) throw ConfigError("make_disc_mesh: radius and h must be positive");
    constexpr double kAngularBias = 0.1;
    int m_rings = std::max(1, static_cast<int>(std::ceil(1.6 * radius / h - 1e-12)));
    for (;; ++m_rings) {
        std::vector<Vec2> nodes;
        nodes.emplace_back(0.0, 0.0);
        std::vector<int> ring_start = {0};
        std::vector<int> ring_count = {1};
        for (int j = 1; j <= m_rings; ++j) {
            double r = radius * j / m_rings;
            int nj = std::max(5, static_cast<int>(std::ceil(2.0 * M_PI * r / (0.7 * h))));
            ring_start.push_back(static_cast<int>(nodes.size()));
            ring_count.push_back(nj);
            for (int i = 0; i < nj; ++i) {
                double s = 2.0 * M_PI * i / nj;
                double phi = s + kAngularBias * std::sin(2.0 * s);
                nodes.emplace_back(r * std::cos(phi), r * std::sin(phi));
            }
        }
        std::vector<std::array<int, 3>> tris;
        // center fan
        {
            int n1 = ring_count[1], s1 = ring_start[1];
            for (int i = 0; i < n1; ++i) tris.push_back({s1 + i, s1 + (i + 1) % n1, 0});
        }
        // annuli: advance along whichever ring has the smaller next angle
        for (int j = 2; j <= m_rings; ++j) {
            int na = ring_count[static_cast<std::size_t>(j - 1)], sa = ring_start[static_cast<std::size_t>(j - 1)];
            int nb = ring_count[static_cast<std::size_t>(j)], sb = ring_start[static_cast<std::size_t>(j)];
            int ia = 0, ib = 0;
            while (ia < na || ib < nb) {
                double next_a = (ia < na) ? (ia + 1.0) / na : std::numeric_limits<double>::infinity();
                double next_b = (ib < nb) ? (ib + 1.0) / nb : std::numeric_limits<double>::infinity();
                if (next_b <= next_a) {
                    tris.push_back({sb + ib % nb, sb + (ib + 1) % nb, sa + ia % na});
                    ++ib;
                } else {
                    tris.push_back({sa + (ia + 1) % na, sa + ia % na, sb + ib % nb});
                    ++ia;
                }
            }
        }
        Triangulation mesh = build_triangulation(std::move(nodes), std::move(tris));
        if (mesh.mesh_size <= h) return mesh;
    }
}

/// Triangle adjacency components when crossings of the crease polyline are
/// blocked. Returns one component id per triangle.
inline std::vector<int> crease_components(const Triangulation& m) {
    std::vector<int> comp(m.triangles.size(), -1);
    int nc = 0;
    std::vector<int> stack;
    for (int seed = 0; seed < m.triangle_count(); ++seed) {
        if (comp[static_cast<std::size_t>(seed)] >= 0) continue;
        comp[static_cast<std::size_t>(seed)] = nc;
        stack.push_back(seed);
        while (!stack.empty()) {
            int t = stack.back();
            stack.pop_back();
            for (int k = 0; k < 3; ++k) {
                const Edge& e = m.edges[static_cast<std::size_t>(m.tri_edges[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)])];
                if (e.tri[1] < 0) continue;
                if (m.crease_node[static_cast<std::size_t>(e.a)] && m.crease_node[static_cast<std::size_t>(e.b)]) continue;
                int o = (e.tri[0] == t) ? e.tri[1] : e.tri[0];
                if (comp[static_cast<std::size_t>(o)] < 0) {
                    comp[static_cast<std::size_t>(o)] = nc;
                    stack.push_back(o);
                }
            }
        }
        ++nc;
    }
    return comp;
}

}  // namespace fvk
