#include "d3ro/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>

namespace d3ro {

namespace {

const std::vector<std::pair<ReformKind, std::string>>& kind_names() {
    static const std::vector<std::pair<ReformKind, std::string>> names = {
        {ReformKind::MM_M_Variation, "MM_M_Variation"},
        {ReformKind::MM_M_Chi2, "MM_M_Chi2"},
        {ReformKind::MM_D_Variation_Obj, "MM_D_Variation_Obj"},
        {ReformKind::MM_D_Chi2_Obj, "MM_D_Chi2_Obj"},
        {ReformKind::MM_D_Variation_Constr, "MM_D_Variation_Constr"},
        {ReformKind::MM_D_Chi2_Constr, "MM_D_Chi2_Constr"},
        {ReformKind::SM_M, "SM_M"},
        {ReformKind::SM_D, "SM_D"},
        {ReformKind::DI, "DI"},
        {ReformKind::DD_SAA, "DD_SAA"},
        {ReformKind::MM_DD_SP, "MM_DD_SP"},
    };
    return names;
}

bool q_is_zero(const SecondStageCore& core) { return core.Q.size() == 0 || core.Q.isZero(0.0); }

}  // namespace

std::string to_string(ReformKind k) {
    for (const auto& [kind, name] : kind_names())
        if (kind == k) return name;
    return "?";
}

ReformKind reform_kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kind_names())
        if (name == s) return kind;
    throw PreconditionViolated("unknown model kind: " + s);
}

bool is_chi2(ReformKind k) {
    return k == ReformKind::MM_M_Chi2 || k == ReformKind::MM_D_Chi2_Obj || k == ReformKind::MM_D_Chi2_Constr;
}

ReformKind multimodal_kind(const D3ROInstance& inst) {
    const bool chi = inst.distance == ModeDistance::ChiSquare;
    if (inst.all_moment()) return chi ? ReformKind::MM_M_Chi2 : ReformKind::MM_M_Variation;
    if (inst.all_wasserstein()) {
        if (inst.second.T_is_zero())
            return chi ? ReformKind::MM_D_Chi2_Obj : ReformKind::MM_D_Variation_Obj;
        return chi ? ReformKind::MM_D_Chi2_Constr : ReformKind::MM_D_Variation_Constr;
    }
    throw PreconditionViolated("modes mix moment and Wasserstein ambiguity");
}

D3ROInstance decision_independent(const D3ROInstance& inst) {
    D3ROInstance out = inst;
    for (auto& m : out.modes) {
        if (auto* mm = std::get_if<MomentMode>(&m)) {
            mm->lower.coef.setZero();
            mm->upper.coef.setZero();
        } else {
            for (auto& s : std::get<WassersteinMode>(m).samples) s.coef.setZero();
        }
    }
    const Vec p0 = mode_probabilities(inst.mode_prob, Vec::Zero(inst.I()));
    out.mode_prob = AffineProb{p0, Mat::Zero(p0.size(), inst.I())};
    return out;
}

// ---------------------------------------------------------------- scenario costs

ScenarioCost::ScenarioCost(const SecondStageCore& core, const RecourseStructure& st, const Vec& y)
    : core_(core), st_(st), y_(y), unit_(core.N(), 0.0), unit_done_(core.N(), false), cache_(core.N()) {}

double ScenarioCost::constant() {
    if (!const_done_) {
        const_ = 0.0;
        for (int b : st_.constant_blocks) {
            RecourseValue v = block_value(core_, st_.blocks[b], y_, 0.0);
            if (v.status != Status::Optimal)
                throw PreconditionViolated("second stage is infeasible or unbounded at the evaluated y");
            const_ += v.value;
        }
        const_done_ = true;
    }
    return const_;
}

double ScenarioCost::coord(int n, double v) {
    if (st_.coord_homogeneous(n) && v >= 0.0) {
        if (!unit_done_[n]) {
            unit_[n] = unit_cost(core_, st_, n, y_);
            unit_done_[n] = true;
        }
        return v * unit_[n];
    }
    for (const auto& [val, cost] : cache_[n])
        if (val == v) return cost;
    double total = 0.0;
    for (int b : st_.by_coord[n]) {
        RecourseValue r = block_value(core_, st_.blocks[b], y_, v);
        if (r.status != Status::Optimal)
            throw PreconditionViolated("second stage is infeasible or unbounded at the evaluated y");
        total += r.value;
    }
    cache_[n].emplace_back(v, total);
    return total;
}

double ScenarioCost::operator()(const Vec& xi) {
    if (st_.separable) {
        double h = constant();
        for (int n = 0; n < core_.N(); ++n) h += coord(n, xi[n]);
        return h;
    }
    RecourseValue r = second_stage_value(core_, y_, xi);
    if (r.status != Status::Optimal)
        throw PreconditionViolated("second stage is infeasible or unbounded at the evaluated y");
    return r.value;
}

// ---------------------------------------------------------------- worst mode

ModeWorst worst_mode_variation(const Vec& psi, const Vec& p_hat, double rho) {
    const int L = static_cast<int>(psi.size());
    ModeWorst out{p_hat, 0.0};
    int top = 0;
    for (int l = 1; l < L; ++l)
        if (psi[l] > psi[top]) top = l;
    std::vector<int> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return psi[a] < psi[b]; });
    double budget = rho / 2.0;
    for (int l : order) {
        if (l == top || budget <= 0.0) continue;
        if (psi[l] >= psi[top]) break;
        const double move = std::min(budget, out.p[l]);
        out.p[l] -= move;
        out.p[top] += move;
        budget -= move;
    }
    double v = 0.0;
    for (int l = 0; l < L; ++l) {
        if (out.p[l] <= 1e-12) continue;
        if (psi[l] == -kInf) {
            out.value = -kInf;
            return out;
        }
        v += out.p[l] * psi[l];
    }
    out.value = v;
    return out;
}

namespace {

template <class F>
double golden_min(F f, double a, double b, int iters, double& arg) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < iters && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    double best = fc;
    arg = c;
    for (double x : {a, b, d}) {
        const double fx = f(x);
        if (fx < best) {
            best = fx;
            arg = x;
        }
    }
    return best;
}

// lambda * phi*(a / lambda) with phi*(s) = 2 - 2 sqrt(1 - s), in the cancellation-free form
double chi2_term(double lam, double a) {
    if (lam <= 0.0) return 0.0;
    const double s = std::sqrt(std::max(0.0, lam * (lam - a)));
    return 2.0 * lam * a / (lam + s);
}

}  // namespace

ModeWorst worst_mode_chi2(const Vec& psi, const Vec& p_hat, double rho) {
    const int L = static_cast<int>(psi.size());
    ModeWorst out{p_hat, 0.0};
    std::vector<int> act;
    for (int l = 0; l < L; ++l) {
        if (psi[l] == -kInf) {
            if (p_hat[l] > 1e-12) {
                out.value = -kInf;
                return out;
            }
            continue;
        }
        act.push_back(l);
    }
    double lo = kInf, hi = -kInf, mean = 0.0;
    for (int l : act) {
        lo = std::min(lo, psi[l]);
        hi = std::max(hi, psi[l]);
        mean += p_hat[l] * psi[l];
    }
    if (rho <= 0.0 || hi - lo <= 0.0) {
        out.value = rho <= 0.0 ? mean : hi;
        return out;
    }
    const double spread = hi - lo;
    auto f = [&](double eta, double lam) {
        double v = eta + rho * lam;
        for (int l : act) v += p_hat[l] * chi2_term(lam, psi[l] - eta);
        return v;
    };
    auto inner = [&](double eta, double& lam_arg) {
        double lam0 = 0.0;
        for (int l : act) lam0 = std::max(lam0, psi[l] - eta);
        double u = std::max(2.0 * lam0, spread);
        for (int it = 0; it < 200 && f(eta, 2.0 * u) < f(eta, u); ++it) u *= 2.0;
        return golden_min([&](double lam) { return f(eta, lam); }, lam0, 2.0 * u, 200, lam_arg);
    };
    double eta_lo = lo - spread * (1.0 + 4.0 / std::sqrt(rho));
    double eta_arg = hi, lam_arg = 0.0, best = kInf;
    for (int round = 0; round < 30; ++round) {
        best = golden_min([&](double eta) { double la; return inner(eta, la); }, eta_lo, hi, 200, eta_arg);
        if (eta_arg > eta_lo + 0.01 * (hi - eta_lo)) break;
        eta_lo -= 4.0 * (hi - eta_lo);
    }
    inner(eta_arg, lam_arg);
    out.value = std::min(best, hi);
    if (lam_arg > 0.0) {
        double total = 0.0;
        for (int l = 0; l < L; ++l) {
            out.p[l] = 0.0;
            if (psi[l] == -kInf || p_hat[l] <= 0.0) continue;
            const double a = psi[l] - eta_arg;
            out.p[l] = p_hat[l] * lam_arg / std::sqrt(std::max(1e-300, lam_arg * (lam_arg - a)));
            total += out.p[l];
        }
        if (total > 0.0) out.p /= total;
        // pull back toward p_hat until the recovered point is feasible
        auto dist = [&](double t) {
            double d = 0.0;
            for (int l = 0; l < L; ++l) {
                const double p = p_hat[l] + t * (out.p[l] - p_hat[l]);
                if (p > 0.0) d += (p - p_hat[l]) * (p - p_hat[l]) / p;
                else if (p_hat[l] > 0.0) return kInf;
            }
            return d;
        };
        if (dist(1.0) > rho) {
            double a = 0.0, b = 1.0;
            for (int it = 0; it < 100; ++it) ((dist(0.5 * (a + b)) <= rho) ? a : b) = 0.5 * (a + b);
            out.p = p_hat + a * (out.p - p_hat);
        }
    }
    return out;
}

// ---------------------------------------------------------------- moment sets

namespace {

// max sum w_v h_v over weights on `vals` with moment rows on f = v (and v^2)
double marginal_max(const std::vector<double>& vals, const std::vector<double>& h, bool second, double lo1, double hi1,
                    double lo2, double hi2) {
    ModelIR m;
    const int K = static_cast<int>(vals.size());
    std::vector<Term> sum, first, sq;
    for (int k = 0; k < K; ++k) {
        const int w = m.add_var("w");
        m.obj[w] = -h[k];
        sum.push_back({w, 1.0});
        first.push_back({w, vals[k]});
        sq.push_back({w, vals[k] * vals[k]});
    }
    m.add_row("sum", sum, Sense::Equal, 1.0);
    m.add_row("m1lo", first, Sense::GreaterEqual, lo1);
    m.add_row("m1hi", first, Sense::LessEqual, hi1);
    if (second) {
        m.add_row("m2lo", sq, Sense::GreaterEqual, lo2);
        m.add_row("m2hi", sq, Sense::LessEqual, hi2);
    }
    SolveReport r = solve_lp(m);
    if (r.status == Status::Infeasible) return -kInf;
    if (r.status != Status::Optimal) throw D3ROError("moment marginal LP failed: " + to_string(r.status));
    return -r.objective;
}

double discrete_max(const std::vector<Vec>& pts, const std::vector<double>& h, MomentKind kind, const Vec& lo,
                    const Vec& hi) {
    ModelIR m;
    const int K = static_cast<int>(pts.size());
    std::vector<Term> sum;
    for (int k = 0; k < K; ++k) {
        const int w = m.add_var("w");
        m.obj[w] = -h[k];
        sum.push_back({w, 1.0});
    }
    m.add_row("sum", sum, Sense::Equal, 1.0);
    std::vector<Vec> f(K);
    for (int k = 0; k < K; ++k) f[k] = moment_basis(kind, pts[k]);
    for (int j = 0; j < lo.size(); ++j) {
        std::vector<Term> t;
        for (int k = 0; k < K; ++k)
            if (f[k][j] != 0.0) t.push_back({k, f[k][j]});
        if (std::isfinite(lo[j])) m.add_row("lo", t, Sense::GreaterEqual, lo[j]);
        if (std::isfinite(hi[j])) m.add_row("hi", t, Sense::LessEqual, hi[j]);
    }
    SolveReport r = solve_lp(m);
    if (r.status == Status::Infeasible) return -kInf;
    if (r.status != Status::Optimal) throw D3ROError("moment weight LP failed: " + to_string(r.status));
    return -r.objective;
}

// first moments on a box with a cost concave in xi: the worst case is a point mass (Jensen)
double box_jensen(const SecondStageCore& core, const Support& s, const Vec& lo, const Vec& hi, const Vec& y) {
    const int N = core.N(), J = core.J(), S = core.S();
    ModelIR m;
    std::vector<int> mv(N), om(S);
    for (int n = 0; n < N; ++n) {
        const double a = std::max(s.lower[n], lo[n]), b = std::min(s.upper[n], hi[n]);
        if (a > b + 1e-9) return -kInf;
        mv[n] = m.add_var("m", a, std::max(a, b));
    }
    const Vec R = core.R_at(y);
    for (int r = 0; r < S; ++r) {
        if (core.sense[r] == Sense::GreaterEqual) om[r] = m.add_var("w", 0.0, kInf);
        else if (core.sense[r] == Sense::Equal) om[r] = m.add_var("w", -kInf, kInf);
        else om[r] = m.add_var("w", -kInf, 0.0);
        m.obj[om[r]] = -R[r];
    }
    for (int j = 0; j < J; ++j) {
        std::vector<Term> t;
        for (int r = 0; r < S; ++r)
            if (core.W(r, j) != 0.0) t.push_back({om[r], core.W(r, j)});
        for (int n = 0; n < N; ++n)
            if (core.Q(j, n) != 0.0) t.push_back({mv[n], -core.Q(j, n)});
        m.add_row("dual", t, std::isfinite(core.x_lower[j]) ? Sense::LessEqual : Sense::Equal, core.q[j]);
    }
    SolveReport r = solve_lp(m);
    if (r.status == Status::Infeasible) throw DualInfeasible("recourse dual is infeasible over the support box");
    if (r.status == Status::Unbounded) throw PreconditionViolated("second stage is infeasible at the evaluated y");
    if (r.status != Status::Optimal) throw D3ROError("box moment LP failed: " + to_string(r.status));
    return -r.objective;
}

}  // namespace

double psi_moment(ScenarioCost& cost, const SecondStageCore& core, const MomentMode& mode, const Vec& y) {
    const Vec lo = mode.lower.eval(y), hi = mode.upper.eval(y);
    for (int j = 0; j < lo.size(); ++j)
        if (lo[j] > hi[j] + 1e-9) return -kInf;
    const int N = core.N();
    const bool second = mode.kind == MomentKind::FirstSecond;
    const auto& s = mode.support;
    if (s.kind == Support::Kind::Box) {
        if (second || !core.T_is_zero())
            throw PreconditionViolated("box moment support is evaluated for first moments and T = 0 only");
        return box_jensen(core, s, lo, hi, y);
    }
    if (s.kind == Support::Kind::Grid && cost.separable()) {
        double total = cost.constant();
        for (int n = 0; n < N; ++n) {
            const auto& vals = s.values[n];
            std::vector<double> h(vals.size());
            for (std::size_t k = 0; k < vals.size(); ++k) h[k] = cost.coord(n, vals[k]);
            const double v = marginal_max(vals, h, second, lo[n], hi[n], second ? lo[N + n] : 0.0,
                                          second ? hi[N + n] : 0.0);
            if (v == -kInf) return -kInf;
            total += v;
        }
        return total;
    }
    const std::vector<Vec> pts = s.kind == Support::Kind::Grid ? grid_points(s, 20000) : s.points;
    std::vector<double> h(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) h[k] = cost(pts[k]);
    return discrete_max(pts, h, mode.kind, lo, hi);
}

double psi_moment(const SecondStageCore& core, const MomentMode& mode, const Vec& y) {
    const RecourseStructure st = analyze_recourse(core);
    ScenarioCost cost(core, st, y);
    return psi_moment(cost, core, mode, y);
}

// ---------------------------------------------------------------- Wasserstein sets

Empirical empirical_at(const WassersteinMode& mode, const Vec& y) {
    Empirical e;
    for (const auto& s : mode.samples) {
        e.points.push_back(s.eval(y));
        e.weights.push_back(1.0 / mode.K());
    }
    return e;
}

bool support_box(const Mat& C, const Vec& d, int N, Vec& lo, Vec& hi) {
    lo = Vec::Constant(N, -kInf);
    hi = Vec::Constant(N, kInf);
    for (int h = 0; h < C.rows(); ++h) {
        int col = -1;
        for (int n = 0; n < N; ++n) {
            if (C(h, n) == 0.0) continue;
            if (col >= 0) return false;
            col = n;
        }
        if (col < 0) {
            if (d[h] < 0.0) return false;
            continue;
        }
        const double b = d[h] / C(h, col);
        if (C(h, col) > 0) hi[col] = std::min(hi[col], b);
        else lo[col] = std::max(lo[col], b);
    }
    return true;
}

double psi_wasserstein_lp(const SecondStageCore& core, const Empirical& emp, double radius, const Mat& C,
                          const Vec& d, NormOrder norm, const Vec& y) {
    if (!core.T_is_zero()) throw PreconditionViolated("objective-uncertainty Wasserstein evaluation needs T = 0");
    if (norm == NormOrder::Two) throw PreconditionViolated("2-norm Wasserstein sets are export-only");
    const int J = core.J(), N = core.N(), H = static_cast<int>(C.rows());
    const Vec R = core.R_at(y);
    ModelIR m;
    const int gamma = m.add_var("gamma", 0.0, kInf);
    m.obj[gamma] = radius;
    for (std::size_t k = 0; k < emp.points.size(); ++k) {
        if (emp.weights[k] <= 0.0) continue;
        const Vec& xi = emp.points[k];
        const Vec cost = core.Q * xi + core.q;
        const Vec slack = d - C * xi;
        std::vector<int> x(J), mu(H);
        for (int j = 0; j < J; ++j) x[j] = m.add_var("x", core.x_lower[j], kInf);
        for (int h = 0; h < H; ++h) mu[h] = m.add_var("mu", 0.0, kInf);
        const int s = m.add_var("s", -kInf, kInf);
        m.obj[s] = emp.weights[k];
        std::vector<Term> t;
        for (int j = 0; j < J; ++j)
            if (cost[j] != 0.0) t.push_back({x[j], cost[j]});
        for (int h = 0; h < H; ++h)
            if (slack[h] != 0.0) t.push_back({mu[h], slack[h]});
        t.push_back({s, -1.0});
        m.add_row("epi", t, Sense::LessEqual, 0.0);
        for (int r = 0; r < core.S(); ++r) {
            std::vector<Term> w;
            for (int j = 0; j < J; ++j)
                if (core.W(r, j) != 0.0) w.push_back({x[j], core.W(r, j)});
            m.add_row("rec", w, core.sense[r], R[r]);
        }
        std::vector<int> aux;
        for (int n = 0; n < N; ++n) {
            LinExpr g;
            for (int j = 0; j < J; ++j)
                if (core.Q(j, n) != 0.0) g.add(x[j], core.Q(j, n));
            for (int h = 0; h < H; ++h)
                if (C(h, n) != 0.0) g.add(mu[h], -C(h, n));
            if (norm == NormOrder::One) {
                LinExpr up = g, dn = g;
                up.add(gamma, -1.0);
                dn.add(gamma, 1.0);
                m.add_row("nu", up, Sense::LessEqual);
                m.add_row("nd", dn, Sense::GreaterEqual);
            } else {
                const int a = m.add_var("a", 0.0, kInf);
                aux.push_back(a);
                LinExpr up = g, dn = g;
                up.add(a, -1.0);
                dn.add(a, 1.0);
                m.add_row("au", up, Sense::LessEqual);
                m.add_row("ad", dn, Sense::GreaterEqual);
            }
        }
        if (norm == NormOrder::Inf) {
            std::vector<Term> t1{{gamma, -1.0}};
            for (int a : aux) t1.push_back({a, 1.0});
            m.add_row("n1", t1, Sense::LessEqual, 0.0);
        }
    }
    SolveReport r = solve_lp(m);
    if (r.status == Status::Optimal) return r.objective;
    if (r.status == Status::Infeasible) return kInf;
    if (r.status == Status::Unbounded) return -kInf;
    throw D3ROError("Wasserstein fixed-y LP failed: " + to_string(r.status));
}

double psi_wasserstein(const SecondStageCore& core, const Empirical& emp, double radius, const Mat& C, const Vec& d,
                       NormOrder norm, const Vec& y) {
    if (!core.T_is_zero()) throw PreconditionViolated("objective-uncertainty Wasserstein evaluation needs T = 0");
    const int N = core.N();
    const RecourseStructure st = analyze_recourse(core);
    Vec lo, hi;
    bool fast = st.separable && norm == NormOrder::One && support_box(C, d, N, lo, hi);
    for (int n = 0; fast && n < N; ++n) {
        if (!st.coord_homogeneous(n) || !(lo[n] >= 0.0) || !std::isfinite(hi[n])) fast = false;
        for (const auto& p : emp.points)
            if (p[n] < lo[n] - 1e-12 || p[n] > hi[n] + 1e-12) fast = false;
    }
    if (!fast) return psi_wasserstein_lp(core, emp, radius, C, d, norm, y);

    // cost is linear in xi on the box: move sample mass along the steepest coordinates
    ScenarioCost cost(core, st, y);
    double base = cost.constant();
    std::vector<std::pair<double, double>> moves;  // (rate, capacity)
    for (int n = 0; n < N; ++n) {
        const double g = cost.coord(n, 1.0);
        double cap = 0.0;
        for (std::size_t k = 0; k < emp.points.size(); ++k) {
            base += emp.weights[k] * emp.points[k][n] * g;
            cap += emp.weights[k] * (g > 0.0 ? hi[n] - emp.points[k][n] : emp.points[k][n] - lo[n]);
        }
        if (g != 0.0) moves.emplace_back(std::abs(g), cap);
    }
    std::stable_sort(moves.begin(), moves.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double budget = radius;
    for (const auto& [rate, cap] : moves) {
        if (budget <= 0.0) break;
        const double used = std::min(budget, cap);
        base += rate * used;
        budget -= used;
    }
    return base;
}

double psi_wasserstein(const SecondStageCore& core, const WassersteinMode& mode, const Vec& y) {
    return psi_wasserstein(core, empirical_at(mode, y), mode.radius, mode.C, mode.d, mode.norm, y);
}

double lipschitz_constant(const SecondStageCore& core, const Vec& y) {
    const int J = core.J(), N = core.N();
    const Mat T = core.T_at(y);
    double lip = 0.0;
    for (int n = 0; n < N; ++n) {
        for (double dir : {1.0, -1.0}) {
            ModelIR m;
            for (int j = 0; j < J; ++j) {
                const int v = m.add_var("phi", std::isfinite(core.x_lower[j]) ? 0.0 : -kInf, kInf);
                m.obj[v] = core.q[j];
            }
            for (int r = 0; r < core.S(); ++r) {
                std::vector<Term> t;
                for (int j = 0; j < J; ++j)
                    if (core.W(r, j) != 0.0) t.push_back({j, core.W(r, j)});
                m.add_row("rec", t, core.sense[r], -dir * T(r, n));
            }
            SolveReport r = solve_lp(m);
            if (r.status == Status::Unbounded) throw DualInfeasible("recourse value is unbounded below");
            if (r.status != Status::Optimal)
                throw PreconditionViolated("recourse becomes infeasible for large deviations of the uncertainty");
            lip = std::max(lip, r.objective);
        }
    }
    return lip;
}

bool recourse_dual_feasible(const SecondStageCore& core) {
    const int J = core.J(), S = core.S();
    ModelIR m;
    for (int r = 0; r < S; ++r) {
        if (core.sense[r] == Sense::GreaterEqual) m.add_var("w", 0.0, kInf);
        else if (core.sense[r] == Sense::Equal) m.add_var("w", -kInf, kInf);
        else m.add_var("w", -kInf, 0.0);
    }
    for (int j = 0; j < J; ++j) {
        std::vector<Term> t;
        for (int r = 0; r < S; ++r)
            if (core.W(r, j) != 0.0) t.push_back({r, core.W(r, j)});
        m.add_row("dual", t, std::isfinite(core.x_lower[j]) ? Sense::LessEqual : Sense::Equal, core.q[j]);
    }
    return solve_lp(m).status == Status::Optimal;
}

double psi_saa(const SecondStageCore& core, const Empirical& emp, const Vec& y) {
    const RecourseStructure st = analyze_recourse(core);
    ScenarioCost cost(core, st, y);
    double v = 0.0;
    for (std::size_t k = 0; k < emp.points.size(); ++k)
        if (emp.weights[k] > 0.0) v += emp.weights[k] * cost(emp.points[k]);
    return v;
}

double psi_constraint(const SecondStageCore& core, const WassersteinMode& mode, const Vec& y) {
    if (!q_is_zero(core)) throw PreconditionViolated("constraint-uncertainty evaluation needs Q = 0");
    if (mode.C.rows() != 0) throw PreconditionViolated("constraint-uncertainty evaluation needs unbounded support");
    if (mode.norm != NormOrder::One) throw PreconditionViolated("constraint-uncertainty evaluation needs the 1-norm");
    return psi_saa(core, empirical_at(mode, y), y) + mode.radius * lipschitz_constant(core, y);
}

// ---------------------------------------------------------------- pooled baselines

std::vector<Vec> grid_points(const Support& s, std::size_t cap) {
    std::size_t total = 1;
    for (const auto& v : s.values) {
        total *= v.size();
        if (total > cap) throw GuardExceeded("grid support too large to expand for a non-separable recourse");
    }
    const int N = static_cast<int>(s.values.size());
    std::vector<Vec> pts;
    std::vector<std::size_t> idx(N, 0);
    for (std::size_t t = 0; t < total; ++t) {
        Vec p(N);
        for (int n = 0; n < N; ++n) p[n] = s.values[n][idx[n]];
        pts.push_back(p);
        for (int n = N - 1; n >= 0; --n) {
            if (++idx[n] < s.values[n].size()) break;
            idx[n] = 0;
        }
    }
    return pts;
}


Support pooled_support(const std::vector<const Support*>& sup, int N) {
    bool all_grid = true, all_box = true, any_box = false;
    for (const auto* s : sup) {
        all_grid &= s->kind == Support::Kind::Grid;
        all_box &= s->kind == Support::Kind::Box;
        any_box |= s->kind == Support::Kind::Box;
    }
    if (all_box) {
        Vec lo = sup[0]->lower, hi = sup[0]->upper;
        for (const auto* s : sup) {
            lo = lo.cwiseMin(s->lower);
            hi = hi.cwiseMax(s->upper);
        }
        return Support::box(lo, hi);
    }
    if (any_box) throw PreconditionViolated("cannot pool box and finite supports");
    if (all_grid) {
        std::vector<std::vector<double>> vals(N);
        for (int n = 0; n < N; ++n) {
            std::set<double> u;
            for (const auto* s : sup) u.insert(s->values[n].begin(), s->values[n].end());
            vals[n].assign(u.begin(), u.end());
        }
        return Support::grid(vals);
    }
    std::vector<Vec> pts;
    std::set<std::vector<double>> seen;
    for (const auto* s : sup) {
        const std::vector<Vec> p = s->kind == Support::Kind::Grid ? grid_points(*s, 20000) : s->points;
        for (const auto& v : p)
            if (seen.insert(std::vector<double>(v.data(), v.data() + v.size())).second) pts.push_back(v);
    }
    return Support::discrete(pts);
}

double support_diameter(const Mat& C, const Vec& d, int N, NormOrder norm) {
    Vec lo, hi;
    if (C.rows() == 0 || !support_box(C, d, N, lo, hi) || !lo.allFinite() || !hi.allFinite())
        throw UnboundedSupport("pooled distance baseline needs a bounded box support");
    const Vec w = hi - lo;
    if (norm == NormOrder::One) return w.sum();
    if (norm == NormOrder::Two) return w.norm();
    return w.maxCoeff();
}

// ---------------------------------------------------------------- inner evaluation

InnerReport evaluate_inner(const D3ROInstance& inst, ReformKind kind, const Vec& y) {
    if (y.size() != inst.I()) throw DimensionMismatch("evaluate_inner: wrong length of y");
    if (kind == ReformKind::DI) {
        return evaluate_inner(decision_independent(inst), multimodal_kind(inst), y);
    }
    InnerReport rep;
    rep.first_stage_cost = inst.first.costs.dot(y);
    rep.p_hat = mode_probabilities(inst.mode_prob, y);
    const int L = inst.L();
    const auto& core = inst.second;
    const RecourseStructure st = analyze_recourse(core);
    ScenarioCost cost(core, st, y);
    bool chi = is_chi2(kind);
    double rho = inst.rho;

    auto need_moment = [&] {
        if (!inst.all_moment()) throw PreconditionViolated(to_string(kind) + " needs moment modes");
    };
    auto need_wass = [&] {
        if (!inst.all_wasserstein()) throw PreconditionViolated(to_string(kind) + " needs Wasserstein modes");
    };

    rep.psi.resize(L);
    switch (kind) {
        case ReformKind::MM_M_Variation:
        case ReformKind::MM_M_Chi2:
            need_moment();
            for (int l = 0; l < L; ++l) rep.psi[l] = psi_moment(cost, core, std::get<MomentMode>(inst.modes[l]), y);
            break;
        case ReformKind::MM_D_Variation_Obj:
        case ReformKind::MM_D_Chi2_Obj:
            need_wass();
            for (int l = 0; l < L; ++l) rep.psi[l] = psi_wasserstein(core, std::get<WassersteinMode>(inst.modes[l]), y);
            break;
        case ReformKind::MM_D_Variation_Constr:
        case ReformKind::MM_D_Chi2_Constr:
            need_wass();
            for (int l = 0; l < L; ++l) rep.psi[l] = psi_constraint(core, std::get<WassersteinMode>(inst.modes[l]), y);
            break;
        case ReformKind::DD_SAA:
            need_wass();
            rho = 0.0;
            for (int l = 0; l < L; ++l)
                rep.psi[l] = psi_saa(core, empirical_at(std::get<WassersteinMode>(inst.modes[l]), y), y);
            break;
        case ReformKind::MM_DD_SP:
            rho = 0.0;
            chi = false;
            for (int l = 0; l < L; ++l) {
                if (const auto* mm = std::get_if<MomentMode>(&inst.modes[l])) {
                    rep.psi[l] = psi_moment(cost, core, *mm, y);
                } else {
                    const auto& wm = std::get<WassersteinMode>(inst.modes[l]);
                    rep.psi[l] = core.T_is_zero() ? psi_wasserstein(core, wm, y) : psi_constraint(core, wm, y);
                }
            }
            break;
        case ReformKind::SM_M: {
            need_moment();
            const auto& m0 = std::get<MomentMode>(inst.modes[0]);
            Vec lo = Vec::Zero(m0.M()), hi = Vec::Zero(m0.M());
            std::vector<const Support*> sup;
            for (int l = 0; l < L; ++l) {
                const auto& mm = std::get<MomentMode>(inst.modes[l]);
                if (mm.kind != m0.kind) throw PreconditionViolated("SM_M needs one moment kind across modes");
                const Vec a = mm.lower.eval(y), b = mm.upper.eval(y);
                if (a.minCoeff() < -1e-12 || b.minCoeff() < -1e-12)
                    throw NegativeBoundViolation(fmt::format("mode {} has a negative moment bound at the evaluated y", l));
                lo += (rep.p_hat[l] - inst.rho) * a;
                hi += (rep.p_hat[l] + inst.rho) * b;
                sup.push_back(&mm.support);
            }
            MomentMode pooled;
            pooled.kind = m0.kind;
            pooled.lower = AffineMap::fixed(lo, inst.I());
            pooled.upper = AffineMap::fixed(hi, inst.I());
            pooled.support = pooled_support(sup, inst.N());
            const double v = psi_moment(cost, core, pooled, y);
            rep.psi = Vec::Constant(1, v);
            rep.p_star = Vec::Ones(1);
            rep.worst = v;
            rep.total = rep.first_stage_cost + v;
            rep.unbounded = v == -kInf;
            return rep;
        }
        case ReformKind::SM_D: {
            need_wass();
            const auto& w0 = std::get<WassersteinMode>(inst.modes[0]);
            Empirical emp;
            double radius = 0.0;
            for (int l = 0; l < L; ++l) {
                const auto& wm = std::get<WassersteinMode>(inst.modes[l]);
                if (wm.norm != w0.norm || wm.C != w0.C || wm.d != w0.d)
                    throw PreconditionViolated("SM_D needs one support polytope and norm across modes");
                radius += rep.p_hat[l] * wm.radius;
                for (const auto& s : wm.samples) {
                    emp.points.push_back(s.eval(y));
                    emp.weights.push_back(rep.p_hat[l] / wm.K());
                }
            }
            radius += inst.rho * support_diameter(w0.C, w0.d, inst.N(), w0.norm);
            const double v = psi_wasserstein(core, emp, radius, w0.C, w0.d, w0.norm, y);
            rep.psi = Vec::Constant(1, v);
            rep.p_star = Vec::Ones(1);
            rep.worst = v;
            rep.total = rep.first_stage_cost + v;
            return rep;
        }
        case ReformKind::DI:
            break;
    }
    const ModeWorst w = chi ? worst_mode_chi2(rep.psi, rep.p_hat, rho) : worst_mode_variation(rep.psi, rep.p_hat, rho);
    rep.p_star = w.p;
    rep.worst = w.value;
    rep.total = rep.first_stage_cost + w.value;
    rep.unbounded = w.value == -kInf;
    return rep;
}

Vec binary_point(long mask, int I) {
    Vec y(I);
    for (int i = 0; i < I; ++i) y[i] = static_cast<double>((mask >> (I - 1 - i)) & 1L);
    return y;
}

SolveReport solve_by_enumeration(const D3ROInstance& inst, ReformKind kind, const EnumerationOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    if (inst.first.kind != FirstStageKind::Binary) throw PreconditionViolated("enumeration needs binary first stage");
    const int I = inst.I();
    if (I > opts.max_binaries) throw GuardExceeded(fmt::format("enumeration over 2^{} candidates refused", I));
    const long count = 1L << I;
    std::vector<double> value(count, kInf);
    std::vector<char> admitted(count, 0);
    std::exception_ptr err;
    std::mutex mu;
    auto work = [&](int tid, int nthreads) {
        for (long mask = tid; mask < count; mask += nthreads) {
            const Vec y = binary_point(mask, I);
            if (!inst.first.admits(y)) continue;
            try {
                value[mask] = evaluate_inner(inst, kind, y).total;
                admitted[mask] = 1;
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    const int nt = std::max(1, opts.threads);
    if (nt == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(work, t, nt);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);

    SolveReport rep;
    double best = kInf;
    for (long mask = 0; mask < count; ++mask)
        if (admitted[mask]) best = std::min(best, value[mask]);
    long arg = -1;
    for (long mask = 0; mask < count && arg < 0; ++mask)
        if (admitted[mask] && (value[mask] == best || value[mask] <= best + 1e-9 * (1.0 + std::abs(best)))) arg = mask;
    rep.nodes = count;
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (arg < 0) {
        rep.status = Status::Infeasible;
        return rep;
    }
    const Vec y = binary_point(arg, I);
    rep.primal.assign(y.data(), y.data() + I);
    rep.objective = best;
    rep.best_bound = best;
    rep.status = best == -kInf ? Status::Unbounded : Status::Optimal;
    return rep;
}

}  // namespace d3ro
