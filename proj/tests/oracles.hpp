#pragma once

// Brute-force reference solvers used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "d3ro/lp.hpp"

namespace d3ro::testing {

// Gaussian elimination with partial pivoting; nullopt when singular.
inline std::optional<std::vector<double>> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int c = 0; c < n; ++c) {
        int p = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
        if (std::abs(a[p][c]) < 1e-10) return std::nullopt;
        std::swap(a[p], a[c]);
        std::swap(b[p], b[c]);
        for (int r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            if (f == 0.0) continue;
            for (int k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    for (int i = 0; i < n; ++i) b[i] /= a[i][i];
    return b;
}

struct VertexResult {
    bool feasible = false;
    double value = 0.0;
    std::vector<double> x;
};

// Minimizes over all vertices of a model whose variables all have finite bounds.
inline VertexResult vertex_enumeration(const ModelIR& m) {
    const int n = m.num_vars();
    struct Hyper {
        std::vector<double> a;
        double b;
        bool eq;
    };
    std::vector<Hyper> hs;
    for (const auto& r : m.rows) {
        std::vector<double> a(n, 0.0);
        for (const auto& t : r.terms) a[t.var] += t.coef;
        hs.push_back({a, r.rhs, r.sense == Sense::Equal});
    }
    for (int j = 0; j < n; ++j) {
        std::vector<double> a(n, 0.0);
        a[j] = 1.0;
        hs.push_back({a, m.vars[j].lower, false});
        hs.push_back({a, m.vars[j].upper, false});
    }
    std::vector<int> eqs, others;
    for (int h = 0; h < static_cast<int>(hs.size()); ++h) (hs[h].eq ? eqs : others).push_back(h);
    VertexResult best;
    if (static_cast<int>(eqs.size()) > n) {
        // overdetermined equalities: fall back to picking n of them too
        others.insert(others.end(), eqs.begin(), eqs.end());
        eqs.clear();
    }
    const int need = n - static_cast<int>(eqs.size());
    std::vector<int> pick;
    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(pick.size()) == need) {
            std::vector<std::vector<double>> a;
            std::vector<double> b;
            for (int h : eqs) {
                a.push_back(hs[h].a);
                b.push_back(hs[h].b);
            }
            for (int h : pick) {
                a.push_back(hs[h].a);
                b.push_back(hs[h].b);
            }
            auto x = dense_solve(a, b);
            if (!x) return;
            if (m.max_violation(*x) > 1e-9) return;
            const double v = m.objective_value(*x);
            if (!best.feasible || v < best.value) {
                best.feasible = true;
                best.value = v;
                best.x = *x;
            }
            return;
        }
        for (int k = start; k < static_cast<int>(others.size()); ++k) {
            pick.push_back(others[k]);
            rec(k + 1);
            pick.pop_back();
        }
    };
    if (n == 0) {
        best.feasible = m.max_violation({}) <= 1e-9;
        best.value = m.obj_constant;
        return best;
    }
    rec(0);
    return best;
}

// Exhaustive binary enumeration with the vertex oracle at each leaf.
inline VertexResult binary_enumeration(const ModelIR& m) {
    const auto bins = m.binaries();
    VertexResult best;
    for (long mask = 0; mask < (1L << bins.size()); ++mask) {
        ModelIR leaf = m;
        for (std::size_t b = 0; b < bins.size(); ++b) {
            const double v = (mask >> b) & 1L;
            leaf.vars[bins[b]].lower = leaf.vars[bins[b]].upper = v;
            leaf.vars[bins[b]].kind = VarKind::Continuous;
        }
        auto r = vertex_enumeration(leaf);
        if (r.feasible && (!best.feasible || r.value < best.value - 1e-12)) best = r;
    }
    return best;
}

inline ModelIR random_lp(std::mt19937_64& rng, int max_vars = 5, int max_rows = 5, int binaries = 0) {
    std::uniform_int_distribution<int> nv(1, max_vars), nr(1, max_rows), coef(-5, 5), rhs(-4, 10), sense(0, 5);
    ModelIR m;
    const int n = std::max(nv(rng), binaries);
    for (int j = 0; j < n; ++j) {
        if (j < binaries) {
            m.add_binary("b" + std::to_string(j));
        } else {
            const double lo = (rng() % 3 == 0) ? -3.0 : 0.0;
            m.add_var("x" + std::to_string(j), lo, 8.0);
        }
        m.obj[j] = coef(rng);
    }
    const int rows = nr(rng);
    for (int i = 0; i < rows; ++i) {
        std::vector<Term> t;
        for (int j = 0; j < n; ++j)
            if (rng() % 4 != 0) t.push_back({j, static_cast<double>(coef(rng))});
        const int s = sense(rng);
        const Sense sn = s < 3 ? Sense::LessEqual : s < 5 ? Sense::GreaterEqual : Sense::Equal;
        m.add_row("r" + std::to_string(i), t, sn, rhs(rng));
    }
    return m;
}

}  // namespace d3ro::testing
