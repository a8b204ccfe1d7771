#include <chrono>
#include <cmath>
#include <memory>
#include <queue>
#include <stdexcept>

#include "d3ro/lp.hpp"

namespace d3ro {

namespace {

struct Node {
    double bound;
    long id;
    std::vector<std::int8_t> fix;  // per binary: -1 free, 0, 1
    std::shared_ptr<const SimplexSolver::Basis> basis;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.id > b.id;
    }
};

bool integral_feasible(const ModelIR& model, const std::vector<double>& x, double tol) {
    if (static_cast<int>(x.size()) != model.num_vars()) return false;
    for (int j : model.binaries())
        if (std::abs(x[j] - std::round(x[j])) > tol) return false;
    return model.max_violation(x) <= 1e-7;
}

}  // namespace

SolveReport solve_milp(const ModelIR& model, const SolverOptions& opts) {
    if (!model.socs.empty()) throw std::invalid_argument("solve_milp: model has cone rows");
    if (!model.has_binaries()) return solve_lp(model, opts);

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

    SimplexSolver lp(model, opts);
    const std::vector<int> bins = model.binaries();
    const int nb = static_cast<int>(bins.size());
    std::vector<std::int8_t> applied(nb, -1);

    double inc = kInf;
    std::vector<double> xinc;
    if (!opts.incumbent.empty() && integral_feasible(model, opts.incumbent, opts.int_tol)) {
        xinc = opts.incumbent;
        for (int j : bins) xinc[j] = std::round(xinc[j]);
        inc = model.objective_value(xinc);
    }
    const auto prune_level = [&] { return inc - 1e-9 * (1.0 + std::abs(inc)); };

    SolveReport rep;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    open.push({-kInf, 0, std::vector<std::int8_t>(nb, -1), nullptr});
    long next_id = 1;
    Status stop = Status::Optimal;
    bool unbounded = false;

    while (!open.empty()) {
        if (rep.nodes >= opts.node_cap) {
            stop = Status::IterationLimit;
            break;
        }
        if (elapsed() > opts.time_limit_s) {
            stop = Status::TimeLimit;
            break;
        }
        Node node = open.top();
        if (node.bound >= prune_level()) break;
        open.pop();

        for (int b = 0; b < nb; ++b) {
            if (applied[b] == node.fix[b]) continue;
            const auto& v = model.vars[bins[b]];
            if (node.fix[b] < 0) lp.set_bounds(bins[b], v.lower, v.upper);
            else lp.set_bounds(bins[b], node.fix[b], node.fix[b]);
            applied[b] = node.fix[b];
        }
        if (node.basis) lp.set_basis(*node.basis);
        lp.set_time_limit(std::max(0.0, opts.time_limit_s - elapsed()));
        SolveReport r = lp.solve();
        ++rep.nodes;
        rep.pivots += r.pivots;

        if (r.status == Status::Infeasible) continue;
        if (r.status == Status::Unbounded) {
            unbounded = true;
            rep.ray = r.ray;
            break;
        }
        if (r.status != Status::Optimal) {
            stop = r.status;
            open.push(node);
            break;
        }
        if (r.objective >= prune_level()) continue;

        int branch = -1;
        double best = opts.int_tol;
        for (int b = 0; b < nb; ++b) {
            const double v = r.primal[bins[b]];
            const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
            if (frac > best) {
                best = frac;
                branch = b;
            }
        }
        if (branch < 0) {
            inc = r.objective;
            xinc = r.primal;
            for (int j : bins) xinc[j] = std::round(xinc[j]);
            continue;
        }
        auto basis = std::make_shared<const SimplexSolver::Basis>(lp.basis());
        for (std::int8_t side : {0, 1}) {
            Node child{r.objective, next_id++, node.fix, basis};
            child.fix[branch] = side;
            open.push(std::move(child));
        }
    }

    rep.best_bound = open.empty() ? inc : std::min(inc, open.top().bound);
    if (unbounded) {
        rep.status = Status::Unbounded;
        rep.objective = -kInf;
        rep.wall_ms = elapsed() * 1e3;
        return rep;
    }
    if (xinc.empty()) {
        rep.status = stop == Status::Optimal ? Status::Infeasible : stop;
        rep.wall_ms = elapsed() * 1e3;
        return rep;
    }

    // polish: re-solve with binaries fixed at the incumbent
    for (int b = 0; b < nb; ++b) lp.set_bounds(bins[b], xinc[bins[b]], xinc[bins[b]]);
    lp.set_time_limit(1e30);
    SolveReport fin = lp.solve();
    rep.pivots += fin.pivots;
    if (fin.status == Status::Optimal && fin.objective <= inc + 1e-7 * (1.0 + std::abs(inc))) {
        rep.primal = fin.primal;
        for (int j : bins) rep.primal[j] = std::round(rep.primal[j]);
        rep.duals = fin.duals;
        rep.reduced = fin.reduced;
        rep.objective = fin.objective;
    } else {
        rep.primal = xinc;
        rep.objective = inc;
    }
    rep.status = stop;
    if (stop == Status::Optimal) rep.best_bound = rep.objective;
    rep.wall_ms = elapsed() * 1e3;
    return rep;
}

}  // namespace d3ro
