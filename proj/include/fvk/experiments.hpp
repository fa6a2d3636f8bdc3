#pragma once

#include "fvk/io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fvk {

/// Experiment description parsed from a plain-text key = value file.
/// Unset fields fall back to per-experiment defaults.
struct ExperimentConfig {
    std::string kind;  // flat_disc_sweep | curvature_inversion | cardboard | bilayer_fold | single_run

    // mesh
    std::string domain;  // disc | square
    double radius = 1.0;
    double half_width = 1.0;
    double h = 0.1;
    std::string crease = "";  // none | straight | arc
    double crease_x = 0.0;

    // problem
    double theta = std::numeric_limits<double>::quiet_NaN();
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double alpha1 = std::numeric_limits<double>::quiet_NaN();
    double alpha2 = std::numeric_limits<double>::quiet_NaN();
    double force_max = 0.0;
    double force_radius = 0.1;
    std::string bc;                 // none | cylinder_supports | left_subdomain_supports
    std::string metric_w;           // l2 | plain
    std::string metric_u;           // l2 | plain | pin_rigid
    bool pin_center = false;
    std::string initial;            // flat | cylinder

    SolverConfig solver;
    double stop_indentation = 0.0;  // stop once the tracked indentation exceeds this (0: off)

    // sweeps
    std::vector<double> theta_schedule;
    std::vector<double> alpha_schedule;
    bool warm_start = true;

    // output
    std::string out_dir = "out";
    bool write_surfaces = true;
    bool write_vtk = false;
    std::vector<int> snapshot_iterations;
    std::vector<double> snapshot_params;
    double scale_u = 1.0;
    double scale_w = 1.0;
    int threads = 1;
    bool deterministic = false;

    std::string raw_text;  // config file contents for the manifest hash
};

namespace detail_cfg {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line) {
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config line " + std::to_string(line) + ": expected a number, got '" + v + "'");
    return d;
}

inline int parse_int(const std::string& v, int line) {
    double d = parse_double(v, line);
    if (d != std::floor(d))
        throw ConfigError("config line " + std::to_string(line) + ": expected an integer, got '" + v + "'");
    return static_cast<int>(d);
}

inline bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config line " + std::to_string(line) + ": expected a boolean, got '" + v + "'");
}

/// Schedules: either a comma list "1,2,3" or a range "first:last:step".
inline std::vector<double> parse_schedule(const std::string& v, int line) {
    std::vector<double> out;
    if (v.find(':') != std::string::npos) {
        std::istringstream ss(v);
        std::string a, b, c;
        std::getline(ss, a, ':');
        std::getline(ss, b, ':');
        std::getline(ss, c);
        double first = parse_double(trim(a), line), last = parse_double(trim(b), line),
               step = parse_double(trim(c), line);
        if (step == 0) throw ConfigError("config line " + std::to_string(line) + ": zero schedule step");
        for (double x = first; (step > 0) ? (x <= last + 1e-9 * std::abs(step)) : (x >= last - 1e-9 * std::abs(step));
             x += step)
            out.push_back(x);
    } else {
        std::istringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), line));
    }
    if (out.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty schedule");
    return out;
}

inline std::vector<int> parse_int_list(const std::string& v, int line) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), line));
    return out;
}

}  // namespace detail_cfg

inline ExperimentConfig parse_config_text(const std::string& text) {
    using namespace detail_cfg;
    ExperimentConfig c;
    c.raw_text = text;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");

        if (key == "experiment") c.kind = val;
        else if (key == "domain") c.domain = val;
        else if (key == "radius") c.radius = parse_double(val, lineno);
        else if (key == "half_width") c.half_width = parse_double(val, lineno);
        else if (key == "h") c.h = parse_double(val, lineno);
        else if (key == "crease") c.crease = val;
        else if (key == "crease_x") c.crease_x = parse_double(val, lineno);
        else if (key == "theta") c.theta = parse_double(val, lineno);
        else if (key == "alpha") c.alpha = parse_double(val, lineno);
        else if (key == "alpha1") c.alpha1 = parse_double(val, lineno);
        else if (key == "alpha2") c.alpha2 = parse_double(val, lineno);
        else if (key == "force_max") c.force_max = parse_double(val, lineno);
        else if (key == "force_radius") c.force_radius = parse_double(val, lineno);
        else if (key == "bc") c.bc = val;
        else if (key == "metric_w") c.metric_w = val;
        else if (key == "metric_u") c.metric_u = val;
        else if (key == "pin_center") c.pin_center = parse_bool(val, lineno);
        else if (key == "initial") c.initial = val;
        else if (key == "tau1") c.solver.tau1 = parse_double(val, lineno);
        else if (key == "tau_max") c.solver.tau_max = parse_double(val, lineno);
        else if (key == "newton_max") c.solver.newton_max = parse_int(val, lineno);
        else if (key == "eps_newton") c.solver.eps_newton = parse_double(val, lineno);
        else if (key == "eps_stop") c.solver.eps_stop = parse_double(val, lineno);
        else if (key == "max_iterations") c.solver.max_iterations = parse_int(val, lineno);
        else if (key == "force_ramp_iterations") c.solver.force_ramp_iterations = parse_int(val, lineno);
        else if (key == "force_hold_iterations") c.solver.force_hold_iterations = parse_int(val, lineno);
        else if (key == "stop_indentation") c.stop_indentation = parse_double(val, lineno);
        else if (key == "theta_schedule") c.theta_schedule = parse_schedule(val, lineno);
        else if (key == "alpha_schedule") c.alpha_schedule = parse_schedule(val, lineno);
        else if (key == "warm_start") c.warm_start = parse_bool(val, lineno);
        else if (key == "out_dir") c.out_dir = val;
        else if (key == "write_surfaces") c.write_surfaces = parse_bool(val, lineno);
        else if (key == "write_vtk") c.write_vtk = parse_bool(val, lineno);
        else if (key == "snapshot_iterations") c.snapshot_iterations = parse_int_list(val, lineno);
        else if (key == "snapshot_params") c.snapshot_params = parse_schedule(val, lineno);
        else if (key == "scale_u") c.scale_u = parse_double(val, lineno);
        else if (key == "scale_w") c.scale_w = parse_double(val, lineno);
        else if (key == "threads") c.threads = parse_int(val, lineno);
        else if (key == "deterministic") c.deterministic = parse_bool(val, lineno);
        else
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail_exp {

inline double defaulted(double v, double fallback) { return std::isnan(v) ? fallback : v; }

inline std::vector<Vec2> paper_arc_polyline(int samples = 801) {
    std::vector<Vec2> p;
    p.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        double t = -1.0 + 2.0 * i / (samples - 1);
        p.emplace_back(std::sin(M_PI * t) / 6.0 + 1.0 / 3.0, t);
    }
    return p;
}

inline double crease_x_on_boundary(const Triangulation& m, double y) {
    // interpolate the crease path at height y (used to find the left subdomain)
    return fvk::detail::crease_x_at(m, y);
}

}  // namespace detail_exp

/// Applies the desk-scale defaults of each experiment family to unset fields.
inline void apply_experiment_defaults(ExperimentConfig& c) {
    using detail_exp::defaulted;
    auto def_str = [](std::string& s, const char* v) {
        if (s.empty()) s = v;
    };
    if (c.kind == "flat_disc_sweep") {
        def_str(c.domain, "disc");
        def_str(c.crease, "none");
        def_str(c.metric_w, "l2");
        def_str(c.metric_u, "l2");
        c.alpha = defaulted(c.alpha, 1.0);
        if (c.theta_schedule.empty()) {
            c.theta_schedule.push_back(1.0);
            for (double t = 25.0; t <= 600.0 + 1e-9; t += 25.0) c.theta_schedule.push_back(t);
        }
        if (c.solver.max_iterations == SolverConfig{}.max_iterations) c.solver.max_iterations = 400;
    } else if (c.kind == "curvature_inversion") {
        def_str(c.domain, "disc");
        def_str(c.crease, "none");
        def_str(c.metric_w, "l2");
        def_str(c.metric_u, "l2");
        c.theta = defaulted(c.theta, 0.0);
        c.pin_center = true;
        if (c.alpha_schedule.empty())
            for (double a = 1.0; a >= -1.0 - 1e-9; a -= 0.05) c.alpha_schedule.push_back(a);
        if (c.snapshot_params.empty()) c.snapshot_params = {1.0, 0.7, 0.3, 0.0, -1.0};
        if (c.solver.max_iterations == SolverConfig{}.max_iterations) c.solver.max_iterations = 400;
    } else if (c.kind == "cardboard") {
        def_str(c.domain, "square");
        def_str(c.crease, "straight");
        def_str(c.bc, "cylinder_supports");
        def_str(c.metric_w, "plain");
        def_str(c.metric_u, "pin_rigid");
        def_str(c.initial, "cylinder");
        c.theta = defaulted(c.theta, 1e6);
        c.alpha = defaulted(c.alpha, 0.0);
        if (c.force_max == 0.0) c.force_max = -0.6e6;
        if (c.solver.force_ramp_iterations == 0) c.solver.force_ramp_iterations = 20;
        // a tight inner tolerance keeps the indentation history quasi-static,
        // which the energy comparison between the two models needs
        if (c.solver.eps_newton == SolverConfig{}.eps_newton) c.solver.eps_newton = 1e-7;
        if (c.stop_indentation == 0.0) c.stop_indentation = 2.6;
        if (c.snapshot_iterations.empty()) c.snapshot_iterations = {20, 30, 40, 50};
        if (c.solver.max_iterations == SolverConfig{}.max_iterations) c.solver.max_iterations = 90;
    } else if (c.kind == "bilayer_fold") {
        def_str(c.domain, "square");
        def_str(c.crease, "arc");
        def_str(c.metric_w, "l2");
        def_str(c.metric_u, "pin_rigid");
        c.theta = defaulted(c.theta, 1.0);
        c.alpha1 = defaulted(c.alpha1, 1.0);
        c.alpha2 = defaulted(c.alpha2, 0.0);
        def_str(c.bc, "left_subdomain_supports");
        if (c.solver.max_iterations == SolverConfig{}.max_iterations) c.solver.max_iterations = 400;
    } else if (c.kind == "single_run") {
        def_str(c.domain, "square");
        def_str(c.crease, "none");
        def_str(c.metric_w, "l2");
        def_str(c.metric_u, "l2");
        c.theta = defaulted(c.theta, 1.0);
    } else {
        throw ConfigError("unknown experiment kind '" + c.kind + "'");
    }
    def_str(c.bc, "none");
    def_str(c.initial, "flat");
    c.alpha = defaulted(c.alpha, 0.0);
    c.alpha1 = defaulted(c.alpha1, c.alpha);
    c.alpha2 = defaulted(c.alpha2, c.alpha);
    if (c.deterministic) c.threads = 1;
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
}

inline Triangulation make_experiment_mesh(const ExperimentConfig& c) {
    if (c.domain == "disc") {
        if (c.crease != "none" && !c.crease.empty())
            throw ConfigError("crease curves are only supported on the square domain");
        return make_disc_mesh(c.radius, c.h);
    }
    if (c.domain != "square") throw ConfigError("unknown domain '" + c.domain + "'");
    CreaseSpec cs;
    if (c.crease == "straight") {
        cs.kind = CreaseSpec::Kind::straight;
        cs.polyline = {Vec2(c.crease_x, -c.half_width), Vec2(c.crease_x, c.half_width)};
    } else if (c.crease == "arc") {
        if (std::abs(c.half_width - 1.0) > 1e-12)
            throw ConfigError("the arc crease is defined on the square [-1,1]^2 (half_width = 1)");
        cs.kind = CreaseSpec::Kind::arc;
        cs.polyline = detail_exp::paper_arc_polyline();
    } else if (c.crease != "none" && !c.crease.empty()) {
        throw ConfigError("unknown crease kind '" + c.crease + "'");
    }
    return make_square_mesh(c.half_width, c.h, cs);
}

/// The spec of one flow run under this config. Crease handling is switchable
/// so the cardboard can run both variants on one mesh.
inline ProblemSpec make_problem_spec(const ExperimentConfig& c, const Triangulation& mesh, bool use_crease) {
    ProblemSpec s;
    s.mesh = &mesh;
    s.theta = c.theta;
    s.alpha1 = c.alpha1;
    s.alpha2 = c.alpha2;
    s.use_crease = use_crease;
    if (c.metric_w == "l2") s.l2_metric_w = true;
    else if (c.metric_w != "plain") throw ConfigError("metric_w must be 'l2' or 'plain'");
    if (c.metric_u == "l2") s.l2_metric_u = true;
    else if (c.metric_u == "pin_rigid") s.pin_rigid_u = true;
    else if (c.metric_u != "plain") throw ConfigError("metric_u must be 'l2', 'plain' or 'pin_rigid'");
    if (c.pin_center) s.pinned_node = mesh.nearest_node(Vec2(0, 0));

    if (c.force_max != 0.0) {
        s.force = VecX::Zero(mesh.node_count());
        for (int i = 0; i < mesh.node_count(); ++i)
            if (mesh.nodes[static_cast<std::size_t>(i)].norm() <= c.force_radius + 1e-12) s.force[i] = c.force_max;
    }

    if (c.bc == "cylinder_supports") {
        double hw = c.half_width;
        s.bc_w = VecX::Zero(mesh.node_count());
        for (int i = 0; i < mesh.node_count(); ++i) {
            double y = mesh.nodes[static_cast<std::size_t>(i)].y();
            s.bc_w[i] = -0.5 * (y * y - hw * hw);
            if (std::abs(std::abs(y) - hw) <= 1e-12) s.simple_nodes.push_back(i);
        }
    } else if (c.bc == "left_subdomain_supports") {
        if (mesh.crease_path.empty()) throw ConfigError("left_subdomain_supports requires a crease");
        for (int i = 0; i < mesh.node_count(); ++i) {
            Vec2 x = mesh.nodes[static_cast<std::size_t>(i)];
            if (std::abs(std::abs(x.y()) - c.half_width) > 1e-12) continue;
            if (x.x() <= detail_exp::crease_x_on_boundary(mesh, x.y()) + 1e-12) s.simple_nodes.push_back(i);
        }
    } else if (c.bc != "none" && !c.bc.empty()) {
        throw ConfigError("unknown bc '" + c.bc + "'");
    }
    return s;
}

inline FlowState make_initial_state(const ExperimentConfig& c, const FlowDriver& driver, const Triangulation& mesh,
                                    bool use_crease) {
    if (c.initial == "cylinder") {
        double hw = c.half_width;
        DktField w0 = DktField::interpolate(
            mesh, [hw](Vec2 x) { return -0.5 * (x.y() * x.y() - hw * hw); },
            [](Vec2 x) { return Vec2(0.0, -x.y()); }, use_crease);
        return driver.initial_state(w0, P1VectorField::zero(mesh));
    }
    if (c.initial != "flat") throw ConfigError("initial must be 'flat' or 'cylinder'");
    return driver.initial_state();
}

/// Output collector: remembers every artifact so the manifest can fingerprint
/// the numeric outputs of a run.
struct ArtifactSink {
    std::filesystem::path dir;
    std::vector<std::string> files;

    explicit ArtifactSink(const std::string& out_dir) : dir(out_dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("cannot create output directory " + out_dir);
    }

    std::string path(const std::string& rel) {
        files.push_back(rel);
        return (dir / rel).string();
    }
};

struct ExperimentResult {
    int exit_code = 0;
    std::string status = "ok";
    std::string abort_reason;
    nlohmann::json extra;
};

namespace detail_exp {

inline void export_state(const ExperimentConfig& c, ArtifactSink& sink, const std::string& label,
                         const FlowState& st, const ProblemSpec& spec, const std::vector<DktElementOps>& ops) {
    if (c.write_surfaces) io::write_state(sink.path("surface_" + label + ".txt"), st.u, st.w, spec, ops);
    if (c.write_vtk)
        io::write_vtk_surface(sink.path("surface_" + label + ".vtk"), st.u, st.w, spec, ops, c.scale_u, c.scale_w);
}

}  // namespace detail_exp

inline ExperimentResult run_experiment(const ExperimentConfig& cfg_in) {
    ExperimentConfig c = cfg_in;
    apply_experiment_defaults(c);
    ArtifactSink sink(c.out_dir);
    ExperimentResult result;
    nlohmann::json manifest;
    manifest["library_version"] = kVersion;
    manifest["experiment"] = c.kind;
    manifest["config_hash"] = hex64(fnv1a64(c.raw_text));
    manifest["config"] = c.raw_text;

    Triangulation mesh = make_experiment_mesh(c);
    io::write_mesh(sink.path("mesh.txt"), mesh);

    try {
        if (c.kind == "flat_disc_sweep") {
            std::vector<io::SweepRow> rows(c.theta_schedule.size());
            std::vector<FlowState> finals(c.theta_schedule.size());
            auto record = [&](std::size_t i, const FlowDriver& driver, const FlowState& fin) {
                io::SweepRow row;
                row.param = c.theta_schedule[i];
                row.iterations = fin.k;
                row.converged = fin.converged;
                row.energy = fin.history.empty() ? EnergyBreakdown{} : fin.history.back().energy;
                row.diag = fin.history.empty() ? Diagnostics{} : fin.history.back().diag;
                rows[i] = row;
                (void)driver;
            };
            if (c.warm_start) {
                ProblemSpec base = make_problem_spec(c, mesh, false);
                auto pts = continuation_sweep(
                    c.theta_schedule, base, [](ProblemSpec& sp, double th) { sp.theta = th; }, c.solver,
                    [&](int i, const FlowDriver& d, const FlowState& fin) { record(static_cast<std::size_t>(i), d, fin); });
                for (std::size_t i = 0; i < pts.size(); ++i) finals[i] = std::move(pts[i].state);
            } else {
                auto run_point = [&](std::size_t i) {
                    ProblemSpec sp = make_problem_spec(c, mesh, false);
                    sp.theta = c.theta_schedule[i];
                    FlowDriver driver(sp, c.solver);
                    FlowState fin = driver.run();
                    record(i, driver, fin);
                    finals[i] = std::move(fin);
                };
                if (c.threads <= 1) {
                    for (std::size_t i = 0; i < c.theta_schedule.size(); ++i) run_point(i);
                } else {
                    std::size_t next = 0;
                    while (next < c.theta_schedule.size()) {
                        std::vector<std::future<void>> batch;
                        for (int t = 0; t < c.threads && next < c.theta_schedule.size(); ++t, ++next)
                            batch.push_back(std::async(std::launch::async, run_point, next));
                        for (auto& f : batch) f.get();
                    }
                }
            }
            io::write_sweep_csv(sink.path("sweep.csv"), "theta", rows);
            double transition = std::numeric_limits<double>::quiet_NaN();
            for (const auto& row : rows)
                if (std::abs(row.diag.mean_curv_1 - row.diag.mean_curv_2) > 0.1) {
                    transition = row.param;
                    break;
                }
            manifest["transition_theta"] = transition;
            ProblemSpec expspec = make_problem_spec(c, mesh, false);
            EnergyAssembly ea(expspec);
            for (double p : c.snapshot_params) {
                for (std::size_t i = 0; i < c.theta_schedule.size(); ++i)
                    if (std::abs(c.theta_schedule[i] - p) < 1e-9)
                        detail_exp::export_state(c, sink, "theta_" + std::to_string(p), finals[i], expspec, ea.ops);
            }
        } else if (c.kind == "curvature_inversion") {
            ProblemSpec base = make_problem_spec(c, mesh, false);
            std::vector<io::SweepRow> rows;
            EnergyAssembly ea(base);
            auto pts = continuation_sweep(
                c.alpha_schedule, base, [](ProblemSpec& sp, double a) { sp.alpha1 = sp.alpha2 = a; }, c.solver,
                [&](int i, const FlowDriver& d, const FlowState& fin) {
                    io::SweepRow row;
                    row.param = c.alpha_schedule[static_cast<std::size_t>(i)];
                    row.iterations = fin.k;
                    row.converged = fin.converged;
                    row.energy = fin.history.empty() ? EnergyBreakdown{} : fin.history.back().energy;
                    row.diag = fin.history.empty() ? Diagnostics{} : fin.history.back().diag;
                    rows.push_back(row);
                    for (double p : c.snapshot_params)
                        if (std::abs(row.param - p) < 1e-9) {
                            ProblemSpec sp = base;
                            sp.alpha1 = sp.alpha2 = p;
                            detail_exp::export_state(c, sink, "alpha_" + std::to_string(p), fin, sp, d.assembly().ops);
                        }
                });
            io::write_sweep_csv(sink.path("sweep.csv"), "alpha", rows);
        } else if (c.kind == "cardboard") {
            std::vector<bool> variants = (c.crease == "none") ? std::vector<bool>{false} : std::vector<bool>{false, true};
            for (bool use_crease : variants) {
                ProblemSpec sp = make_problem_spec(c, mesh, use_crease);
                FlowDriver driver(sp, c.solver);
                driver.tracked_node = mesh.nearest_node(Vec2(0, 0));
                FlowState st = make_initial_state(c, driver, mesh, use_crease);
                double w0_track = st.w.value[driver.tracked_node];
                std::string label = use_crease ? "crease" : "nocrease";
                std::set<int> snaps(c.snapshot_iterations.begin(), c.snapshot_iterations.end());
                while (st.k < c.solver.max_iterations) {
                    driver.step(st);
                    if (snaps.count(st.k))
                        detail_exp::export_state(c, sink, label + "_iter" + std::to_string(st.k), st, sp,
                                                 driver.assembly().ops);
                    const IterationRecord& rec = st.history.back();
                    if (rec.dtw_norm + rec.dtu_norm <= c.solver.eps_stop * std::min(1.0, rec.tau)) {
                        st.converged = true;
                        break;
                    }
                    if (c.stop_indentation > 0 && w0_track - rec.w_track > c.stop_indentation) break;
                }
                io::write_flow_csv(sink.path("iterations_" + label + ".csv"), st);
                detail_exp::export_state(c, sink, label + "_final", st, sp, driver.assembly().ops);
                manifest["iterations_" + label] = st.k;
            }
        } else if (c.kind == "bilayer_fold" || c.kind == "single_run") {
            bool use_crease = c.crease != "none";
            ProblemSpec sp = make_problem_spec(c, mesh, use_crease);
            FlowDriver driver(sp, c.solver);
            driver.tracked_node = mesh.nearest_node(Vec2(0, 0));
            FlowState st = make_initial_state(c, driver, mesh, use_crease);
            std::set<int> snaps(c.snapshot_iterations.begin(), c.snapshot_iterations.end());
            while (st.k < c.solver.max_iterations) {
                driver.step(st);
                if (snaps.count(st.k))
                    detail_exp::export_state(c, sink, "iter" + std::to_string(st.k), st, sp, driver.assembly().ops);
                const IterationRecord& rec = st.history.back();
                if (rec.dtw_norm + rec.dtu_norm <= c.solver.eps_stop * std::min(1.0, rec.tau)) {
                    st.converged = true;
                    break;
                }
            }
            io::write_flow_csv(sink.path("iterations.csv"), st);
            detail_exp::export_state(c, sink, "final", st, sp, driver.assembly().ops);
            manifest["iterations"] = st.k;
            manifest["converged"] = st.converged;
            if (!st.history.empty()) {
                manifest["final_energy"] = st.history.back().energy.total;
                double wmax = st.w.value.cwiseAbs().maxCoeff();
                manifest["max_abs_deflection"] = wmax;
                // deflection range of the right subdomain, the read-out of the
                // bilayer folding comparison
                double rmax = 0;
                for (int i = 0; i < mesh.node_count(); ++i) {
                    bool right = true;
                    if (!mesh.crease_path.empty())
                        right = mesh.nodes[static_cast<std::size_t>(i)].x() >
                                detail_exp::crease_x_on_boundary(mesh, mesh.nodes[static_cast<std::size_t>(i)].y());
                    if (right) rmax = std::max(rmax, std::abs(st.w.value[i]));
                }
                manifest["right_subdomain_max_deflection"] = rmax;
            }
        }
    } catch (const SolverError& e) {
        result.exit_code = 2;
        result.status = "aborted";
        result.abort_reason = e.what();
    }

    manifest["status"] = result.status;
    if (!result.abort_reason.empty()) manifest["abort_reason"] = result.abort_reason;
    nlohmann::json outputs = nlohmann::json::array();
    std::uint64_t combined = 0xcbf29ce484222325ull;
    for (const auto& rel : sink.files) {
        std::uint64_t hash = io::hash_file((sink.dir / rel).string());
        outputs.push_back({{"file", rel}, {"fnv64", hex64(hash)}});
        combined = fnv1a64(rel, combined);
        combined = fnv1a64(hex64(hash), combined);
    }
    manifest["outputs"] = outputs;
    manifest["outputs_hash"] = hex64(combined);

    std::ofstream mf((sink.dir / "manifest.json").string());
    if (!mf) throw Error("cannot write manifest");
    mf << manifest.dump(2) << "\n";
    return result;
}

}  // namespace fvk
