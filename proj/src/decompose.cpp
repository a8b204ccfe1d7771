#include "d3ro/decompose.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

#include <fmt/format.h>

namespace d3ro {

std::size_t CutPool::size() const {
    std::size_t n = 0;
    for (const auto& m : per_mode) n += m.size();
    return n;
}

namespace {

Separation separate_over(const SecondStageCore& core, const Vec& lo, const Vec& hi, const Vec& R, const Vec& diff) {
    const int N = core.N(), S = core.S(), J = core.J();
    ModelIR m;
    for (int n = 0; n < N; ++n) {
        m.add_var(fmt::format("xi{}", n), lo[n], hi[n]);
        m.add_obj(n, diff[n]);
    }
    for (int s = 0; s < S; ++s) {
        const bool eq = core.sense[s] == Sense::Equal;
        const int w = m.add_var(fmt::format("w{}", s), eq ? -kInf : 0.0, kInf);
        m.add_obj(w, -R[s]);
    }
    for (int j = 0; j < J; ++j) {
        std::vector<Term> t;
        for (int s = 0; s < S; ++s)
            if (core.W(s, j) != 0.0) t.push_back({N + s, core.W(s, j)});
        for (int n = 0; n < N; ++n)
            if (core.Q(j, n) != 0.0) t.push_back({n, -core.Q(j, n)});
        const bool free_x = !std::isfinite(core.x_lower[j]);
        m.add_row(fmt::format("x{}", j), std::move(t), free_x ? Sense::Equal : Sense::LessEqual, core.q[j]);
    }
    const SolveReport rep = solve_lp(m);
    if (rep.status == Status::Infeasible) throw DualInfeasible("separation: the recourse dual is empty");
    if (rep.status == Status::Unbounded) throw PreconditionViolated("separation: the recourse is infeasible at some support point");
    if (rep.status != Status::Optimal) throw D3ROError("separation LP did not finish: " + to_string(rep.status));
    Separation out;
    out.value = -rep.objective;
    out.xi = Vec::Map(rep.primal.data(), N);
    out.omega = Vec::Map(rep.primal.data() + N, S);
    return out;
}

// cut row alpha - sum_i (R_i^T omega) y_i + diff(beta)^T xi >= R_0^T omega
void add_cut(ModelIR& m, const BuiltModel& built, const SecondStageCore& core, const MomentSlot& slot, const Cut& c,
             const std::string& name) {
    LinExpr row;
    row.add(slot.alpha, 1.0);
    const Vec g = core.R.coef.transpose() * c.omega;
    for (std::size_t i = 0; i < built.y.size(); ++i)
        if (g[i] != 0.0) row.add(built.y[i], -g[i]);
    for (std::size_t n = 0; n < slot.diff.size(); ++n)
        if (c.xi[n] != 0.0) row.add(slot.diff[n], c.xi[n]);
    m.add_row(name, row, Sense::GreaterEqual, core.R.constant.dot(c.omega));
}

double expr_value(const LinExpr& e, const std::vector<double>& x) {
    double v = e.constant;
    for (const auto& t : e.terms) v += t.coef * x[t.var];
    return v;
}

Vec slot_diff(const MomentSlot& slot, const std::vector<double>& x) {
    Vec d(slot.diff.size());
    for (std::size_t n = 0; n < slot.diff.size(); ++n) d[n] = expr_value(slot.diff[n], x);
    return d;
}

double cut_value(const SecondStageCore& core, const Cut& c, const Vec& y, const Vec& diff) {
    return core.R_at(y).dot(c.omega) - diff.dot(c.xi);
}

}  // namespace

Separation separation(const SecondStageCore& core, const Support& support, const Vec& y, const Vec& diff) {
    if (!core.T_is_zero()) throw PreconditionViolated("separation needs T(y) = 0");
    if (diff.size() != core.N()) throw DimensionMismatch("separation: multiplier difference must have N entries");
    const Vec R = core.R_at(y);
    if (support.kind == Support::Kind::Box) return separate_over(core, support.lower, support.upper, R, diff);
    const std::vector<Vec> pts = support.kind == Support::Kind::Grid ? grid_points(support, 20000) : support.points;
    if (pts.empty()) throw PreconditionViolated("separation: empty support");
    Separation best;
    best.value = -kInf;
    for (const auto& xi : pts) {
        Separation s = separate_over(core, xi, xi, R, diff);
        if (s.value > best.value) best = std::move(s);
    }
    return best;
}

DecompositionResult run_decomposition(const D3ROInstance& inst, const DecompositionOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count(); };
    if (multimodal_kind(inst) != ReformKind::MM_M_Variation)
        throw PreconditionViolated("decomposition needs variation-distance moment modes");
    if (inst.first.kind != FirstStageKind::Binary) throw PreconditionViolated("decomposition needs a binary first stage");
    if (!std::holds_alternative<AffineProb>(inst.mode_prob))
        throw PreconditionViolated("decomposition needs affine mode probabilities");
    const auto& core = inst.second;
    std::vector<const Support*> supports;
    for (const auto& mode : inst.modes) {
        const auto& mm = std::get<MomentMode>(mode);
        if (mm.kind != MomentKind::First) throw PreconditionViolated("decomposition uses first moments only");
        if (mm.support.kind != Support::Kind::Box)
            throw PreconditionViolated("decomposition is set up for box supports; build the full model otherwise");
        supports.push_back(&mm.support);
    }

    BuildOptions bo = opts.build;
    bo.cut_master = true;
    const BuiltModel built = build_variation_moment(inst, bo);
    const int L = inst.L(), I = inst.I();
    ModelIR master = built.model;

    DecompositionResult out;
    out.pool.per_mode.assign(L, {});
    auto push_cut = [&](int l, Cut c) {
        add_cut(master, built, core, built.slots[l], c, fmt::format("cut{}_{}", l, out.pool.per_mode[l].size()));
        out.pool.per_mode[l].push_back(std::move(c));
    };
    // valid cuts from two reference points keep alpha bounded in the first master
    for (const Vec& y0 : {Vec(Vec::Zero(I)), Vec(Vec::Ones(I))})
        for (int l = 0; l < L; ++l) {
            const Separation s = separation(core, *supports[l], y0, Vec::Zero(core.N()));
            push_cut(l, {s.xi, s.omega});
        }

    SolverOptions so = opts.solver;
    so.time_limit_s = opts.master_time_cap_s;
    std::vector<double> incumbent, last_primal;
    double lb = -kInf, ub = kInf;
    Vec best_y;
    Status status = Status::IterationLimit;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        IterationLog row;
        row.iteration = it;
        so.incumbent = incumbent;
        const auto tm = std::chrono::steady_clock::now();
        const SolveReport rep = solve_milp(master, so);
        row.master_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tm).count();
        out.iterations = it;
        if (rep.status == Status::Optimal) {
            lb = std::max(lb, rep.objective);
        } else {
            if (std::isfinite(rep.best_bound)) lb = std::max(lb, rep.best_bound);
            status = rep.status;
            if (rep.primal.empty()) break;
        }
        const auto& x = rep.primal;
        last_primal = x;
        Vec y(I);
        for (int i = 0; i < I; ++i) y[i] = std::round(x[built.y[i]]);

        std::vector<Vec> diffs(L);
        for (int l = 0; l < L; ++l) diffs[l] = slot_diff(built.slots[l], x);
        std::vector<std::future<Separation>> jobs;
        for (int l = 0; l < L; ++l)
            jobs.push_back(std::async(std::launch::deferred, [&, l] { return separation(core, *supports[l], y, diffs[l]); }));
        std::vector<Separation> seps;
        for (auto& j : jobs) seps.push_back(j.get());

        // restricted problem: y, beta and alpha = psi fixed, a small LP in the remaining variables
        ModelIR fixed = master;
        for (auto& v : fixed.vars) v.kind = VarKind::Continuous;
        for (int i = 0; i < I; ++i) fixed.vars[built.y[i]].lower = fixed.vars[built.y[i]].upper = y[i];
        for (int l = 0; l < L; ++l) {
            for (int b : built.slots[l].multipliers) fixed.vars[b].lower = fixed.vars[b].upper = x[b];
            const int a = built.slots[l].alpha;
            fixed.vars[a].lower = fixed.vars[a].upper = seps[l].value;
        }
        const SolveReport urep = solve_lp(fixed);
        if (urep.status == Status::Optimal && urep.objective < ub) {
            ub = urep.objective;
            best_y = y;
            incumbent = urep.primal;
        }

        for (int l = 0; l < L; ++l) {
            const double a = x[built.slots[l].alpha];
            if (seps[l].value > a + 1e-7 * (1.0 + std::abs(a))) {
                push_cut(l, {seps[l].xi, seps[l].omega});
                ++row.cuts_added;
            }
        }
        row.lb = lb;
        row.ub = ub;
        out.log.push_back(row);
        if (opts.on_iteration) opts.on_iteration(row);
        if (rep.status != Status::Optimal) break;
        if (row.cuts_added == 0) {
            out.exact = true;
            status = Status::Optimal;
            break;
        }
        if (std::isfinite(ub) && ub - lb <= opts.gap_tol * std::abs(ub)) {
            status = Status::Optimal;
            break;
        }
    }

    if (!last_primal.empty()) {
        for (int l = 0; l < L; ++l) {
            const Vec d = slot_diff(built.slots[l], last_primal);
            Vec y(I);
            for (int i = 0; i < I; ++i) y[i] = std::round(last_primal[built.y[i]]);
            const double a = last_primal[built.slots[l].alpha];
            for (const auto& c : out.pool.per_mode[l])
                out.replay_violation = std::max(out.replay_violation, cut_value(core, c, y, d) - a);
        }
    }
    out.lb = lb;
    out.ub = ub;
    out.y = best_y;
    out.report.status = status;
    out.report.objective = ub;
    out.report.best_bound = lb;
    out.report.primal = incumbent;
    out.report.wall_ms = elapsed();
    return out;
}

}  // namespace d3ro
