#include "d3ro/structure.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace d3ro {

namespace {

int find_root(std::vector<int>& parent, int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
}

}  // namespace

bool RecourseStructure::coord_homogeneous(int n) const {
    for (int b : by_coord[n])
        if (!blocks[b].homogeneous) return false;
    return true;
}

RecourseStructure analyze_recourse(const SecondStageCore& core) {
    const int J = core.J(), S = core.S(), N = core.N();
    std::vector<int> parent(J);
    std::iota(parent.begin(), parent.end(), 0);
    for (int r = 0; r < S; ++r) {
        int first = -1;
        for (int j = 0; j < J; ++j) {
            if (core.W(r, j) == 0.0) continue;
            if (first < 0) first = j;
            else parent[find_root(parent, j)] = find_root(parent, first);
        }
    }
    RecourseStructure st;
    st.by_coord.assign(N, {});
    std::vector<int> block_of(J, -1);
    for (int j = 0; j < J; ++j) {
        const int root = find_root(parent, j);
        if (block_of[root] < 0) {
            block_of[root] = static_cast<int>(st.blocks.size());
            st.blocks.emplace_back();
        }
        block_of[j] = block_of[root];
        st.blocks[block_of[j]].xs.push_back(j);
    }
    // rows without recourse variables go to their own block
    for (int r = 0; r < S; ++r) {
        int b = -1;
        for (int j = 0; j < J && b < 0; ++j)
            if (core.W(r, j) != 0.0) b = block_of[j];
        if (b < 0) {
            b = static_cast<int>(st.blocks.size());
            st.blocks.emplace_back();
        }
        st.blocks[b].rows.push_back(r);
    }
    for (int b = 0; b < static_cast<int>(st.blocks.size()); ++b) {
        auto& blk = st.blocks[b];
        std::set<int> coords;
        bool zero_q = true;
        for (int j : blk.xs) {
            for (int n = 0; n < N; ++n)
                if (core.Q(j, n) != 0.0) coords.insert(n);
            if (core.q[j] != 0.0) zero_q = false;
        }
        std::set<int> t_coords;
        for (int r : blk.rows)
            for (int n = 0; n < N; ++n)
                if (core.T[n].constant[r] != 0.0 || (core.T[n].coef.cols() > 0 && !core.T[n].coef.row(r).isZero(0.0)))
                    t_coords.insert(n);
        coords.insert(t_coords.begin(), t_coords.end());
        if (coords.size() > 1) st.separable = false;
        if (coords.empty()) {
            st.constant_blocks.push_back(b);
            continue;
        }
        blk.coord = *coords.begin();
        blk.homogeneous = coords.size() == 1 && zero_q && t_coords.empty();
        for (int n : coords) st.by_coord[n].push_back(b);
    }
    return st;
}

namespace {

RecourseValue solve_restricted(const SecondStageCore& core, const std::vector<int>& xs, const std::vector<int>& rows,
                               const Vec& y, const Vec& xi) {
    ModelIR m;
    std::vector<int> col(core.J(), -1);
    for (int j : xs) col[j] = m.add_var("x", core.x_lower[j], kInf);
    const Vec cost = core.Q * xi + core.q;
    for (int j : xs) m.obj[col[j]] = cost[j];
    const Vec rhs = core.R_at(y) - core.T_at(y) * xi;
    for (int r : rows) {
        std::vector<Term> t;
        for (int j : xs)
            if (core.W(r, j) != 0.0) t.push_back({col[j], core.W(r, j)});
        m.add_row("r", t, core.sense[r], rhs[r]);
    }
    RecourseValue out;
    SolveReport rep = solve_lp(m);
    out.status = rep.status;
    if (rep.status == Status::Optimal) {
        out.value = rep.objective;
        out.x.assign(core.J(), 0.0);
        for (int j : xs) out.x[j] = rep.primal[col[j]];
    } else if (rep.status == Status::Unbounded) {
        out.value = -kInf;
    } else {
        out.value = kInf;
    }
    return out;
}

}  // namespace

RecourseValue second_stage_value(const SecondStageCore& core, const Vec& y, const Vec& xi) {
    std::vector<int> xs(core.J()), rows(core.S());
    std::iota(xs.begin(), xs.end(), 0);
    std::iota(rows.begin(), rows.end(), 0);
    return solve_restricted(core, xs, rows, y, xi);
}

RecourseValue block_value(const SecondStageCore& core, const RecourseBlock& block, const Vec& y, double value) {
    Vec xi = Vec::Zero(core.N());
    if (block.coord >= 0) xi[block.coord] = value;
    return solve_restricted(core, block.xs, block.rows, y, xi);
}

double unit_cost(const SecondStageCore& core, const RecourseStructure& st, int n, const Vec& y) {
    double g = 0.0;
    for (int b : st.by_coord[n]) {
        RecourseValue v = block_value(core, st.blocks[b], y, 1.0);
        if (v.status != Status::Optimal)
            throw PreconditionViolated("second stage is not feasible and bounded at the evaluated y");
        g += v.value;
    }
    return g;
}

void recourse_bounds(const SecondStageCore& core, const FirstStage& first, Vec& lo, Vec& hi) {
    const int J = core.J(), I = first.I();
    lo = core.x_lower;
    hi = Vec::Constant(J, kInf);
    if (!core.T_is_zero()) return;
    ModelIR m;
    for (int j = 0; j < J; ++j) m.add_var("x", core.x_lower[j], kInf);
    for (int i = 0; i < I; ++i) {
        const bool bin = first.kind == FirstStageKind::Binary;
        m.add_var("y", bin ? 0.0 : first.lower[i], bin ? 1.0 : first.upper[i]);
    }
    for (int r = 0; r < core.S(); ++r) {
        LinExpr e;
        for (int j = 0; j < J; ++j)
            if (core.W(r, j) != 0.0) e.add(j, core.W(r, j));
        for (int i = 0; i < I; ++i)
            if (core.R.coef(r, i) != 0.0) e.add(J + i, -core.R.coef(r, i));
        m.add_row("r", e, core.sense[r], core.R.constant[r]);
    }
    for (const auto& s : first.side) {
        LinExpr e;
        for (int i = 0; i < I; ++i)
            if (s.coef[i] != 0.0) e.add(J + i, s.coef[i]);
        m.add_row("side", e, s.sense, s.rhs);
    }
    for (int j = 0; j < J; ++j) {
        for (int dir : {1, -1}) {
            ModelIR b = m;
            b.obj.assign(b.num_vars(), 0.0);
            b.obj[j] = dir;
            SolveReport r = solve_lp(b);
            if (r.status != Status::Optimal) continue;
            if (dir > 0) lo[j] = std::max(lo[j], r.objective);
            else hi[j] = -r.objective;
        }
    }
}

}  // namespace d3ro
