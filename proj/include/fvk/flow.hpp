#pragma once

#include "fvk/energy.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fvk {

struct SolverConfig {
    double tau1 = 1.0;
    double tau_max = 1e5;
    int newton_max = 5;
    double eps_newton = 1e-5;
    double eps_stop = 1e-12;
    int max_iterations = 1000;
    double tau_min = 1e-14;
    int force_ramp_iterations = 0;   // 0: full force from the first step
    int force_hold_iterations = 1;   // flow iterations spent at each ramp level
    bool enforce_energy_decay = true;
    double energy_decay_slack = 1e-10;
};

struct NewtonReport {
    bool converged = false;
    int solves = 0;
    std::vector<double> residuals;  // dual-metric residuals scaled by 1/tau
};

struct IterationRecord {
    int k = 0;
    double tau = 0;
    double force_scale = 1;
    EnergyBreakdown energy;
    double dtw_norm = 0;
    double dtu_norm = 0;
    int newton_solves = 0;
    std::vector<double> newton_residuals;
    Diagnostics diag;
    double crease_jump = 0;
    double w_track = std::numeric_limits<double>::quiet_NaN();
};

struct FlowState {
    P1VectorField u;
    DktField w;
    double tau = 1.0;
    int k = 0;
    bool converged = false;
    std::vector<IterationRecord> history;
};

/// Index map between the full algebraic vector and its free (non-Dirichlet)
/// part.
struct Reduction {
    std::vector<int> full_to_free;
    std::vector<int> free_dofs;

    static Reduction build(const DofMask& mask) {
        Reduction r;
        r.full_to_free.assign(mask.fixed.size(), -1);
        for (std::size_t d = 0; d < mask.fixed.size(); ++d) {
            if (!mask.fixed[d]) {
                r.full_to_free[d] = static_cast<int>(r.free_dofs.size());
                r.free_dofs.push_back(static_cast<int>(d));
            }
        }
        return r;
    }

    int n_free() const { return static_cast<int>(free_dofs.size()); }

    VecX restrict_vec(const VecX& full) const {
        VecX f(n_free());
        for (int i = 0; i < n_free(); ++i) f[i] = full[free_dofs[static_cast<std::size_t>(i)]];
        return f;
    }

    void inject(const VecX& free, VecX& full) const {
        for (int i = 0; i < n_free(); ++i) full[free_dofs[static_cast<std::size_t>(i)]] = free[i];
    }

    SparseMat restrict_matrix(const SparseMat& A) const {
        std::vector<Triplet> trip;
        trip.reserve(static_cast<std::size_t>(A.nonZeros()));
        for (int c = 0; c < A.outerSize(); ++c) {
            int fc = full_to_free[static_cast<std::size_t>(c)];
            if (fc < 0) continue;
            for (SparseMat::InnerIterator it(A, c); it; ++it) {
                int fr = full_to_free[static_cast<std::size_t>(it.row())];
                if (fr >= 0) trip.emplace_back(fr, fc, it.value());
            }
        }
        SparseMat R(n_free(), n_free());
        R.setFromTriplets(trip.begin(), trip.end());
        return R;
    }
};

/// Reduce A x = b to the free DOFs, moving fixed values to the right-hand side.
inline void reduce_system(const SparseMat& A, const VecX& b, const DofMask& mask, const Reduction& red,
                          SparseMat& A_ff, VecX& b_f) {
    A_ff = red.restrict_matrix(A);
    VecX correction = VecX::Zero(A.rows());
    bool any_fixed_nonzero = false;
    for (std::size_t d = 0; d < mask.fixed.size(); ++d)
        if (mask.fixed[d] && mask.values[static_cast<Eigen::Index>(d)] != 0.0) {
            any_fixed_nonzero = true;
            break;
        }
    if (any_fixed_nonzero) {
        VecX xf = VecX::Zero(A.rows());
        for (std::size_t d = 0; d < mask.fixed.size(); ++d)
            if (mask.fixed[d]) xf[static_cast<Eigen::Index>(d)] = mask.values[static_cast<Eigen::Index>(d)];
        correction = A * xf;
    }
    b_f = red.restrict_vec(b - correction);
}

/// The crease-coupled saddle-point system
///   [ J   C^T ] [ delta  ]   [ rhs ]
///   [ C   0   ] [ lambda ] = [ 0   ]
/// where each row of C enforces equality of the duplicated value updates of
/// one crease node. Requires distinct, nondegenerate pairs.
struct SaddleSystem {
    SparseMat K;
    int n_primal = 0;
    int n_constraints = 0;
};

inline SaddleSystem apply_crease_coupling(const SparseMat& J_free, const std::vector<std::pair<int, int>>& pairs) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].first == pairs[i].second)
            throw SolverError("crease coupling: degenerate constraint row (identical DOFs)");
        for (std::size_t j = i + 1; j < pairs.size(); ++j)
            if (pairs[i] == pairs[j]) throw SolverError("crease coupling: duplicate constraint rows");
    }
    SaddleSystem s;
    s.n_primal = static_cast<int>(J_free.rows());
    s.n_constraints = static_cast<int>(pairs.size());
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(J_free.nonZeros()) + 4 * pairs.size());
    for (int c = 0; c < J_free.outerSize(); ++c)
        for (SparseMat::InnerIterator it(J_free, c); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), c, it.value());
    for (int r = 0; r < s.n_constraints; ++r) {
        int row = s.n_primal + r;
        trip.emplace_back(row, pairs[static_cast<std::size_t>(r)].first, 1.0);
        trip.emplace_back(row, pairs[static_cast<std::size_t>(r)].second, -1.0);
        trip.emplace_back(pairs[static_cast<std::size_t>(r)].first, row, 1.0);
        trip.emplace_back(pairs[static_cast<std::size_t>(r)].second, row, -1.0);
    }
    s.K.resize(s.n_primal + s.n_constraints, s.n_primal + s.n_constraints);
    s.K.setFromTriplets(trip.begin(), trip.end());
    return s;
}

/// Direct solver for symmetric systems that may carry crease constraints:
/// LDLT for the unconstrained SPD case, sparse LU on the saddle form
/// otherwise. Also provides the dual norm of residual functionals in the
/// constrained metric.
class ConstrainedSolver {
public:
    void factor(const SparseMat& A_free, const std::vector<std::pair<int, int>>& pairs, const char* what) {
        pairs_ = pairs;
        n_primal_ = static_cast<int>(A_free.rows());
        if (pairs.empty()) {
            ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>();
            ldlt_->compute(A_free);
            if (ldlt_->info() != Eigen::Success)
                throw SolverError(std::string(what) + ": factorization failed (matrix singular or indefinite)");
            lu_.reset();
        } else {
            SaddleSystem s = apply_crease_coupling(A_free, pairs);
            lu_ = std::make_unique<Eigen::SparseLU<SparseMat>>();
            lu_->compute(s.K);
            if (lu_->info() != Eigen::Success)
                throw SolverError(std::string(what) + ": saddle factorization failed");
            ldlt_.reset();
        }
    }

    bool factored() const { return ldlt_ || lu_; }

    /// Solve with right-hand side rhs (and zero constraint values).
    VecX solve(const VecX& rhs, VecX* lambda = nullptr) const {
        if (ldlt_) {
            VecX x = ldlt_->solve(rhs);
            if (lambda) lambda->resize(0);
            return x;
        }
        VecX ext = VecX::Zero(n_primal_ + static_cast<int>(pairs_.size()));
        ext.head(n_primal_) = rhs;
        VecX sol = lu_->solve(ext);
        if (lambda) *lambda = sol.tail(static_cast<int>(pairs_.size()));
        return sol.head(n_primal_);
    }

    double dual_norm(const VecX& f) const {
        VecX x = solve(f);
        return std::sqrt(std::max(0.0, f.dot(x)));
    }

private:
    std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>> ldlt_;
    std::unique_ptr<Eigen::SparseLU<SparseMat>> lu_;
    std::vector<std::pair<int, int>> pairs_;
    int n_primal_ = 0;
};

/// Runs the decoupled gradient flow for one problem setup: an implicit
/// Newton-solved deflection step under adaptive step sizes, followed by the
/// exact linear in-plane step. Step sizes halve until the Newton scheme
/// converges within its iteration budget and double after every accepted
/// step up to tau_max.
class FlowDriver {
public:
    FlowDriver(const ProblemSpec& spec, const SolverConfig& cfg)
        : cfg_(cfg), a_(spec), wred_(Reduction::build(a_.w_dirichlet)), ured_(Reduction::build(a_.u_dirichlet)) {
        for (std::size_t p = 0; p < a_.wmap.value_pairs.size(); ++p) {
            auto [v1, v2] = a_.wmap.value_pairs[p];
            bool f1 = a_.w_dirichlet.fixed[static_cast<std::size_t>(v1)];
            bool f2 = a_.w_dirichlet.fixed[static_cast<std::size_t>(v2)];
            if (f1 != f2) throw SolverError("crease pair with mixed Dirichlet status");
            if (f1) continue;  // both pinned to the same boundary value
            wpairs_free_.emplace_back(wred_.full_to_free[static_cast<std::size_t>(v1)],
                                      wred_.full_to_free[static_cast<std::size_t>(v2)]);
        }
        SparseMat M = wred_.restrict_matrix(a_.w_metric);
        metric_w_.factor(M, wpairs_free_, "vertical flow metric");
    }

    const EnergyAssembly& assembly() const { return a_; }
    const ProblemSpec& spec() const { return a_.spec; }
    const SolverConfig& config() const { return cfg_; }
    int tracked_node = -1;

    double force_scale(int k) const {
        if (cfg_.force_ramp_iterations <= 0) return 1.0;
        int hold = std::max(1, cfg_.force_hold_iterations);
        double level = std::ceil(static_cast<double>(k) / hold);
        return std::min(1.0, level / cfg_.force_ramp_iterations);
    }

    /// Zero fields with the Dirichlet values imposed.
    FlowState initial_state() const {
        FlowState s;
        VecX w_alg = VecX::Zero(a_.wmap.n_dofs);
        apply_w_mask(w_alg);
        s.w = from_algebraic(a_.mesh(), a_.wmap, w_alg);
        VecX uv = VecX::Zero(2 * a_.mesh().node_count());
        apply_u_mask(uv);
        s.u = vec_to_field(a_.mesh(), uv);
        s.tau = cfg_.tau1;
        return s;
    }

    /// Start from given fields; they must satisfy the constraints.
    FlowState initial_state(const DktField& w0, const P1VectorField& u0) const {
        FlowState s;
        VecX w_alg = to_algebraic(w0, a_.wmap);
        for (std::size_t d = 0; d < a_.w_dirichlet.fixed.size(); ++d)
            if (a_.w_dirichlet.fixed[d] &&
                std::abs(w_alg[static_cast<Eigen::Index>(d)] - a_.w_dirichlet.values[static_cast<Eigen::Index>(d)]) > 1e-10)
                throw ConfigError("initial deflection violates the boundary conditions");
        apply_w_mask(w_alg);
        s.w = from_algebraic(a_.mesh(), a_.wmap, w_alg);
        VecX uv = field_to_vec(u0);
        for (std::size_t d = 0; d < a_.u_dirichlet.fixed.size(); ++d)
            if (a_.u_dirichlet.fixed[d] &&
                std::abs(uv[static_cast<Eigen::Index>(d)] - a_.u_dirichlet.values[static_cast<Eigen::Index>(d)]) > 1e-10)
                throw ConfigError("initial displacement violates the boundary conditions");
        apply_u_mask(uv);
        s.u = vec_to_field(a_.mesh(), uv);
        s.tau = cfg_.tau1;
        return s;
    }

    NewtonReport newton_solve_w(const VecX& w_prev_alg, const VecX& u_prev, double tau, double fscale,
                                VecX& w_out) const {
        NewtonReport rep;
        VecX w = w_prev_alg;
        for (int solves = 0;; ++solves) {
            VecX F = w_residual(a_, u_prev, w, w_prev_alg, tau, fscale);
            double rho = metric_w_.dual_norm(wred_.restrict_vec(F)) / tau;
            rep.residuals.push_back(rho);
            rep.solves = solves;
            if (!std::isfinite(rho)) return rep;
            if (rho <= cfg_.eps_newton) {
                rep.converged = true;
                w_out = w;
                return rep;
            }
            if (solves == cfg_.newton_max) return rep;
            SparseMat J = wred_.restrict_matrix(w_jacobian(a_, u_prev, w, tau));
            VecX delta;
            if (wpairs_free_.empty()) {
                Eigen::SparseLU<SparseMat> lu(J);
                if (lu.info() != Eigen::Success) return rep;  // singular: same treatment as non-convergence
                delta = lu.solve(-wred_.restrict_vec(F));
            } else {
                SaddleSystem s = apply_crease_coupling(J, wpairs_free_);
                Eigen::SparseLU<SparseMat> lu(s.K);
                if (lu.info() != Eigen::Success) return rep;
                VecX ext = VecX::Zero(s.n_primal + s.n_constraints);
                ext.head(s.n_primal) = -wred_.restrict_vec(F);
                delta = VecX(lu.solve(ext).head(s.n_primal));
            }
            if (!delta.allFinite()) return rep;
            VecX w_free = wred_.restrict_vec(w) + delta;
            wred_.inject(w_free, w);
        }
    }

    /// One accepted flow step: halve tau until the Newton scheme succeeds and
    /// the energy does not increase, then solve the linear in-plane step and
    /// double tau for the next iteration.
    void step(FlowState& s) const {
        const int k = s.k + 1;
        const double fscale = force_scale(k);
        VecX w_prev_alg = to_algebraic(s.w, a_.wmap);
        apply_w_mask(w_prev_alg);
        VecX u_prev = field_to_vec(s.u);
        apply_u_mask(u_prev);
        EnergyBreakdown e_prev = assemble_energy_ops(u_prev, s.w, a_.spec, a_.ops, fscale);

        double tau = s.tau;
        for (;;) {
            VecX w_new_alg;
            NewtonReport rep = newton_solve_w(w_prev_alg, u_prev, tau, fscale, w_new_alg);
            if (rep.converged) {
                double jump = 0;
                DktField w_new = from_algebraic(a_.mesh(), a_.wmap, w_new_alg, &jump);
                VecX u_new = solve_u_step(w_new, u_prev, tau);
                EnergyBreakdown e_new = assemble_energy_ops(u_new, w_new, a_.spec, a_.ops, fscale);
                bool decay_ok = !cfg_.enforce_energy_decay ||
                                e_new.total <= e_prev.total + cfg_.energy_decay_slack * std::abs(e_prev.total);
                if (decay_ok) {
                    IterationRecord rec;
                    rec.k = k;
                    rec.tau = tau;
                    rec.force_scale = fscale;
                    rec.energy = e_new;
                    VecX dw = w_new_alg - w_prev_alg;
                    VecX du = u_new - u_prev;
                    rec.dtw_norm = std::sqrt(std::max(0.0, dw.dot(a_.w_metric * dw))) / tau;
                    rec.dtu_norm = std::sqrt(std::max(0.0, du.dot(a_.u_metric * du))) / tau;
                    rec.newton_solves = rep.solves;
                    rec.newton_residuals = rep.residuals;
                    rec.diag = diagnostics(w_new, u_new, a_.ops);
                    rec.crease_jump = jump;
                    if (tracked_node >= 0) rec.w_track = w_new.value[tracked_node];
                    s.w = std::move(w_new);
                    s.u = vec_to_field(a_.mesh(), u_new);
                    s.k = k;
                    s.tau = std::min(2.0 * tau, cfg_.tau_max);
                    s.history.push_back(std::move(rec));
                    return;
                }
            }
            tau *= 0.5;
            if (tau < cfg_.tau_min)
                throw SolverError("flow stuck: step size underflow at iteration " + std::to_string(k));
        }
    }

    FlowState run(FlowState s) const {
        while (s.k < cfg_.max_iterations) {
            step(s);
            const IterationRecord& rec = s.history.back();
            if (rec.dtw_norm + rec.dtu_norm <= cfg_.eps_stop * std::min(1.0, rec.tau)) {
                s.converged = true;
                break;
            }
        }
        return s;
    }

    FlowState run() const { return run(initial_state()); }

private:
    void apply_w_mask(VecX& w_alg) const {
        for (std::size_t d = 0; d < a_.w_dirichlet.fixed.size(); ++d)
            if (a_.w_dirichlet.fixed[d])
                w_alg[static_cast<Eigen::Index>(d)] = a_.w_dirichlet.values[static_cast<Eigen::Index>(d)];
    }
    void apply_u_mask(VecX& u) const {
        for (std::size_t d = 0; d < a_.u_dirichlet.fixed.size(); ++d)
            if (a_.u_dirichlet.fixed[d])
                u[static_cast<Eigen::Index>(d)] = a_.u_dirichlet.values[static_cast<Eigen::Index>(d)];
    }

    VecX solve_u_step(const DktField& w_new, const VecX& u_prev, double tau) const {
        USystem sys = u_step_system(a_, w_new, u_prev, tau);
        SparseMat A_ff;
        VecX b_f;
        reduce_system(sys.A, sys.b, a_.u_dirichlet, ured_, A_ff, b_f);
        Eigen::SimplicialLDLT<SparseMat> ldlt(A_ff);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("u step: factorization failed (singular strain system)");
        VecX u_free = ldlt.solve(b_f);
        VecX u = VecX::Zero(sys.b.size());
        apply_u_mask(u);
        ured_.inject(u_free, u);
        return u;
    }

    SolverConfig cfg_;
    EnergyAssembly a_;
    Reduction wred_, ured_;
    std::vector<std::pair<int, int>> wpairs_free_;
    ConstrainedSolver metric_w_;
};

struct SweepPoint {
    double param = 0;
    FlowState state;
};

/// Runs the flow once per schedule entry, warm-starting every run from the
/// previous final state. Strictly sequential.
inline std::vector<SweepPoint> continuation_sweep(
    const std::vector<double>& schedule, const ProblemSpec& base,
    const std::function<void(ProblemSpec&, double)>& apply, const SolverConfig& cfg,
    const std::function<void(int, const FlowDriver&, const FlowState&)>& on_point = {}) {
    if (schedule.empty()) throw ConfigError("continuation_sweep: empty schedule");
    std::vector<SweepPoint> points;
    points.reserve(schedule.size());
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        ProblemSpec spec = base;
        apply(spec, schedule[i]);
        FlowDriver driver(spec, cfg);
        FlowState init = (i == 0) ? driver.initial_state()
                                  : driver.initial_state(points.back().state.w, points.back().state.u);
        FlowState fin = driver.run(std::move(init));
        if (on_point) on_point(static_cast<int>(i), driver, fin);
        points.push_back({schedule[i], std::move(fin)});
    }
    return points;
}

}  // namespace fvk
