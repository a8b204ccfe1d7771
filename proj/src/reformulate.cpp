#include "d3ro/reformulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "d3ro/structure.hpp"

namespace d3ro {

namespace {

// monomials over y: {-1,-1} constant, {i,-1} y_i, {i,j} y_i y_j with i <= j
using Mono = std::pair<int, int>;
using Poly = std::map<Mono, double>;
using PolySum = std::map<Mono, LinExpr>;
const Mono kOne{-1, -1};

Poly constant_poly(double c) {
    Poly p;
    if (c != 0.0) p[kOne] = c;
    return p;
}

Poly affine_row(const AffineMap& a, int r) {
    Poly p = constant_poly(a.constant[r]);
    for (int i = 0; i < a.in_dim(); ++i)
        if (a.coef(r, i) != 0.0) p[{i, -1}] += a.coef(r, i);
    return p;
}

void add_to(Poly& a, const Poly& b, double scale = 1.0) {
    for (const auto& [k, v] : b) a[k] += scale * v;
}

bool is_finite(const Poly& p) {
    for (const auto& [k, v] : p)
        if (!std::isfinite(v)) return false;
    return true;
}

bool is_constant(const Poly& p) {
    for (const auto& [k, v] : p)
        if (k != kOne && v != 0.0) return false;
    return true;
}

double constant_of(const Poly& p) {
    auto it = p.find(kOne);
    return it == p.end() ? 0.0 : it->second;
}

// product of two polynomials of degree <= 1; y_i^2 = y_i for binary y
Poly multiply(const Poly& a, const Poly& b, bool binary) {
    Poly out;
    for (const auto& [ka, va] : a) {
        for (const auto& [kb, vb] : b) {
            if (va == 0.0 || vb == 0.0) continue;
            if (ka.second >= 0 || kb.second >= 0) throw PreconditionViolated("polynomial in y of degree above two");
            Mono k;
            if (ka == kOne) k = kb;
            else if (kb == kOne) k = ka;
            else if (ka.first == kb.first && binary) k = {ka.first, -1};
            else k = {std::min(ka.first, kb.first), std::max(ka.first, kb.first)};
            out[k] += va * vb;
        }
    }
    return out;
}

// range of a polynomial over y in its box (quadratic terms bounded termwise)
std::pair<double, double> poly_range(const Poly& p, const Vec& ylo, const Vec& yhi) {
    double lo = 0.0, hi = 0.0;
    for (const auto& [k, v] : p) {
        if (k == kOne) {
            lo += v;
            hi += v;
            continue;
        }
        double a = ylo[k.first], b = yhi[k.first];
        if (k.second >= 0) {
            const double c = ylo[k.second], d = yhi[k.second];
            const double e[4] = {a * c, a * d, b * c, b * d};
            a = *std::min_element(e, e + 4);
            b = *std::max_element(e, e + 4);
        }
        lo += std::min(v * a, v * b);
        hi += std::max(v * a, v * b);
    }
    return {lo, hi};
}

std::vector<Poly> probability_polys(const ModeProbabilityModel& model, int I) {
    std::vector<Poly> out;
    if (const auto* a = std::get_if<AffineProb>(&model)) {
        for (int l = 0; l < a->base.size(); ++l) {
            Poly p = constant_poly(a->base[l]);
            for (int i = 0; i < I; ++i)
                if (a->slopes(l, i) != 0.0) p[{i, -1}] += a->slopes(l, i);
            out.push_back(p);
        }
        return out;
    }
    if (const auto* s = std::get_if<LinearScalingProb>(&model)) {
        const int L = static_cast<int>(s->base.size());
        std::vector<bool> scaled(L, false);
        for (int l : s->scaled) scaled.at(l) = true;
        double sm = 0.0, rm = 0.0;
        for (int l = 0; l < L; ++l) (scaled[l] ? sm : rm) += s->base[l];
        for (int l = 0; l < L; ++l) {
            Poly p;
            if (scaled[l]) {
                p[{s->var, -1}] = s->base[l];
            } else {
                p[kOne] = s->base[l] / rm;
                p[{s->var, -1}] = -sm * s->base[l] / rm;
            }
            out.push_back(p);
        }
        return out;
    }
    throw PreconditionViolated("builders need affine or linear-scaling mode probabilities");
}

class Builder {
public:
    Builder(const D3ROInstance& inst, const BuildOptions& opts, ReformKind kind)
        : inst_(inst), core_(inst.second), opts_(opts), m_(out_.model) {
        inst.validate();
        out_.kind = kind;
        binary_ = inst.first.kind == FirstStageKind::Binary;
        const int I = inst.I();
        ylo_ = binary_ ? Vec::Zero(I) : inst.first.lower;
        yhi_ = binary_ ? Vec::Ones(I) : inst.first.upper;
        big_ = opts.big > 0.0 ? opts.big : default_big(inst);
        out_.big = big_;
        st_ = analyze_recourse(core_);
        recourse_bounds(core_, inst.first, xlo_, xhi_);
        unit_.assign(core_.N(), -1);
        cap_value_ = big_ * (1.0 + scenario_scale());
        first_stage();
    }

    BuiltModel finish() {
        out_.model.validate();
        return std::move(out_);
    }

    const D3ROInstance& inst() const { return inst_; }
    ModelIR& model() { return m_; }
    bool binary() const { return binary_; }
    double big() const { return big_; }
    void mark_soc() { out_.has_soc = true; }

    Poly poly(const AffineMap& a, int r) const { return affine_row(a, r); }
    std::pair<double, double> range(const Poly& p) const { return poly_range(p, ylo_, yhi_); }

    int capped_var(const std::string& name, double lo, double hi) {
        const int v = m_.add_var(name, lo, hi);
        out_.capped.emplace_back(v, std::max(std::abs(lo), std::abs(hi)));
        return v;
    }
    int multiplier(const std::string& name, bool free) { return capped_var(name, free ? -big_ : 0.0, big_); }
    int value_var(const std::string& name, bool capped, double lo_if_capped = -1.0) {
        if (!capped) return m_.add_var(name, -kInf, kInf);
        return capped_var(name, lo_if_capped * cap_value_, cap_value_);
    }

    std::pair<double, double> range(const LinExpr& e) const {
        double lo = e.constant, hi = e.constant;
        for (const auto& t : e.terms) {
            const auto& v = m_.vars[t.var];
            lo += t.coef > 0 ? t.coef * v.lower : t.coef * v.upper;
            hi += t.coef > 0 ? t.coef * v.upper : t.coef * v.lower;
        }
        return {lo, hi};
    }

    // z = u * e for a 0/1 variable u
    LinExpr product(int u, LinExpr e, const std::string& name) {
        e.compact();
        LinExpr out;
        if (e.terms.empty()) {
            out.add(u, e.constant);
            return out;
        }
        if (!binary_) throw PreconditionViolated("bilinear term with a continuous first stage");
        const auto [lo, hi] = range(e);
        if (!std::isfinite(lo) || !std::isfinite(hi))
            throw PreconditionViolated(fmt::format("unbounded factor in product {}", name));
        const int z = m_.add_var(name, std::min(lo, 0.0), std::max(hi, 0.0));
        LinExpr r1;
        r1.add(z, 1.0).add(e, -1.0).add(u, -lo);
        m_.add_row(name + "_a", r1, Sense::LessEqual, -lo);
        LinExpr r2;
        r2.add(z, 1.0).add(e, -1.0).add(u, -hi);
        m_.add_row(name + "_b", r2, Sense::GreaterEqual, -hi);
        m_.add_row(name + "_c", {{z, 1.0}, {u, -hi}}, Sense::LessEqual, 0.0);
        m_.add_row(name + "_d", {{z, 1.0}, {u, -lo}}, Sense::GreaterEqual, 0.0);
        out.add(z, 1.0);
        return out;
    }

    // y_i y_j through w <= y_i, w <= y_j, w >= y_i + y_j - 1
    int pair_var(int i, int j) {
        if (!binary_) throw PreconditionViolated("quadratic term in y with a continuous first stage");
        auto it = pairs_.find({i, j});
        if (it != pairs_.end()) return it->second;
        const int w = m_.add_var(fmt::format("w_{}_{}", i, j), 0.0, 1.0);
        m_.add_row(fmt::format("w_{}_{}_a", i, j), {{w, 1.0}, {out_.y[i], -1.0}}, Sense::LessEqual, 0.0);
        m_.add_row(fmt::format("w_{}_{}_b", i, j), {{w, 1.0}, {out_.y[j], -1.0}}, Sense::LessEqual, 0.0);
        m_.add_row(fmt::format("w_{}_{}_c", i, j), {{w, 1.0}, {out_.y[i], -1.0}, {out_.y[j], -1.0}},
                   Sense::GreaterEqual, -1.0);
        pairs_[{i, j}] = w;
        return w;
    }

    int mono_var(const Mono& k) {
        if (k.second < 0) return out_.y[k.first];
        if (k.first == k.second) {
            if (binary_) return out_.y[k.first];
            throw PreconditionViolated("square of a continuous first-stage variable");
        }
        return pair_var(k.first, k.second);
    }

    // a polynomial with constant coefficients as a linear expression
    LinExpr linear(const Poly& p) {
        LinExpr e;
        for (const auto& [k, v] : p) {
            if (v == 0.0) continue;
            if (k == kOne) e.add_constant(v);
            else e.add(mono_var(k), v);
        }
        return e;
    }

    static void accumulate(PolySum& acc, const Poly& p, const LinExpr& e, double scale = 1.0) {
        for (const auto& [k, v] : p)
            if (v != 0.0) acc[k].add(e, v * scale);
    }

    LinExpr emit(const PolySum& acc, const std::string& tag) {
        LinExpr out;
        for (const auto& [k, e] : acc) {
            if (k == kOne) {
                out.add(e);
                continue;
            }
            const std::string name =
                k.second < 0 ? fmt::format("{}_y{}", tag, k.first) : fmt::format("{}_y{}y{}", tag, k.first, k.second);
            out.add(product(mono_var(k), e, name));
        }
        out.compact();
        return out;
    }

    // ---------------------------------------------------------- recourse copies

    // x over `xs` satisfying the `rows` of T(y) xi + W x (sense) R(y); returns (Q xi + q)^T x
    LinExpr copy(const std::vector<int>& xs, const std::vector<int>& rows, const std::vector<Poly>& xi,
                 const std::string& tag) {
        const int N = core_.N();
        std::map<int, int> var;
        for (int j : xs) var[j] = m_.add_var(fmt::format("{}_x{}", tag, j), xlo_[j], xhi_[j]);
        for (int s : rows) {
            LinExpr lhs;
            for (int j : xs)
                if (core_.W(s, j) != 0.0) lhs.add(var[j], core_.W(s, j));
            Poly rhs = affine_row(core_.R, s);
            for (int n = 0; n < N; ++n) {
                const Poly t = affine_row(core_.T[n], s);
                if (t.empty() || xi[n].empty()) continue;
                add_to(rhs, multiply(t, xi[n], binary_), -1.0);
            }
            lhs.add(linear(rhs), -1.0);
            m_.add_row(fmt::format("{}_r{}", tag, s), lhs, core_.sense[s], 0.0);
        }
        PolySum cost;
        LinExpr fixed;
        for (int j : xs)
            if (core_.q[j] != 0.0) fixed.add(var[j], core_.q[j]);
        cost[kOne] = fixed;
        for (int n = 0; n < N; ++n) {
            LinExpr qx;
            for (int j : xs)
                if (core_.Q(j, n) != 0.0) qx.add(var[j], core_.Q(j, n));
            if (!qx.terms.empty()) accumulate(cost, xi[n], qx);
        }
        return emit(cost, tag + "_c");
    }

    std::vector<Poly> fixed_xi(const Vec& xi) const {
        std::vector<Poly> out;
        for (int n = 0; n < xi.size(); ++n) out.push_back(constant_poly(xi[n]));
        return out;
    }

    void collect(const std::vector<int>& blocks, std::vector<int>& xs, std::vector<int>& rows) const {
        for (int b : blocks) {
            xs.insert(xs.end(), st_.blocks[b].xs.begin(), st_.blocks[b].xs.end());
            rows.insert(rows.end(), st_.blocks[b].rows.begin(), st_.blocks[b].rows.end());
        }
    }

    LinExpr const_cost() {
        if (!const_) {
            std::vector<int> xs, rows;
            collect(st_.constant_blocks, xs, rows);
            const_ = xs.empty() && rows.empty() ? LinExpr() : copy(xs, rows, fixed_xi(Vec::Zero(core_.N())), "h0");
        }
        return *const_;
    }

    // t_n = Q_n^T x_n over one shared copy of coordinate n's blocks
    int unit_var(int n) {
        if (unit_[n] >= 0) return unit_[n];
        std::vector<int> xs, rows;
        collect(st_.by_coord[n], xs, rows);
        Vec e = Vec::Zero(core_.N());
        e[n] = 1.0;
        const LinExpr c = copy(xs, rows, fixed_xi(e), fmt::format("u{}", n));
        const auto [lo, hi] = range(c);
        const int t = m_.add_var(fmt::format("t{}", n), lo, hi);
        LinExpr row = c;
        row.add(t, -1.0);
        m_.add_row(fmt::format("t{}_def", n), row, Sense::Equal, 0.0);
        unit_[n] = t;
        return t;
    }

    bool linear_coord(int n) const { return opts_.share_recourse && st_.coord_homogeneous(n); }

    LinExpr coord_cost(int n, double v) {
        if (st_.by_coord[n].empty()) return LinExpr();
        if (linear_coord(n) && v >= 0.0) {
            LinExpr e;
            if (v != 0.0) e.add(unit_var(n), v);
            return e;
        }
        auto it = coord_cache_.find({n, v});
        if (it != coord_cache_.end()) return it->second;
        std::vector<int> xs, rows;
        collect(st_.by_coord[n], xs, rows);
        Vec xi = Vec::Zero(core_.N());
        xi[n] = v;
        LinExpr c = copy(xs, rows, fixed_xi(xi), fmt::format("h{}_{}", n, coord_cache_.size()));
        coord_cache_[{n, v}] = c;
        return c;
    }

    LinExpr point_cost(const Vec& xi) {
        if (st_.separable) {
            LinExpr e = const_cost();
            for (int n = 0; n < core_.N(); ++n) e.add(coord_cost(n, xi[n]));
            return e;
        }
        std::vector<int> xs(core_.J()), rows(core_.S());
        for (int j = 0; j < core_.J(); ++j) xs[j] = j;
        for (int s = 0; s < core_.S(); ++s) rows[s] = s;
        return copy(xs, rows, fixed_xi(xi), fmt::format("p{}", ++points_));
    }

    std::vector<int> all_x() const {
        std::vector<int> xs(core_.J());
        for (int j = 0; j < core_.J(); ++j) xs[j] = j;
        return xs;
    }
    std::vector<int> all_rows() const {
        std::vector<int> rows(core_.S());
        for (int s = 0; s < core_.S(); ++s) rows[s] = s;
        return rows;
    }

    // ---------------------------------------------------------- ambiguity blocks

    // sup of E h over the moment set, as the dual min over (alpha, beta)
    LinExpr moment_block(MomentKind kind, const std::vector<Poly>& lo, const std::vector<Poly>& hi, const Support& sup,
                         const std::string& tag) {
        const int N = core_.N();
        const int M = static_cast<int>(lo.size());
        const bool second = kind == MomentKind::FirstSecond;
        PolySum E;
        std::vector<LinExpr> diff(M);
        std::vector<int> betas;
        for (int m = 0; m < M; ++m) {
            const bool lo_ok = is_finite(lo[m]), hi_ok = is_finite(hi[m]);
            if (lo_ok && hi_ok && lo[m] == hi[m]) {
                const int b = multiplier(fmt::format("{}_b{}", tag, m), true);
                betas.push_back(b);
                accumulate(E, hi[m], LinExpr().add(b, 1.0));
                diff[m].add(b, 1.0);
                continue;
            }
            if (hi_ok) {
                const int b = multiplier(fmt::format("{}_bu{}", tag, m), false);
                betas.push_back(b);
                accumulate(E, hi[m], LinExpr().add(b, 1.0));
                diff[m].add(b, 1.0);
            }
            if (lo_ok) {
                const int b = multiplier(fmt::format("{}_bl{}", tag, m), false);
                betas.push_back(b);
                accumulate(E, lo[m], LinExpr().add(b, -1.0));
                diff[m].add(b, -1.0);
            }
        }
        if (sup.kind == Support::Kind::Box && opts_.cut_master) {
            if (second || !core_.T_is_zero())
                throw PreconditionViolated("cut master is built for first moments and T = 0 only");
            MomentSlot slot;
            slot.mode = static_cast<int>(out_.slots.size());
            slot.alpha = m_.add_var(tag + "_alpha", -kInf, kInf);
            slot.multipliers = betas;
            slot.diff = diff;
            out_.slots.push_back(std::move(slot));
            E[kOne].add(out_.slots.back().alpha, 1.0);
            return emit(E, tag);
        }
        if (sup.kind == Support::Kind::Box) {
            if (second || !core_.T_is_zero())
                throw PreconditionViolated("box moment support is built for first moments and T = 0 only");
            // Jensen: the worst case is a point mass; dual of max R^T w over W^T w - Q m <= q, m in the box
            const LinExpr c = copy(all_x(), all_rows(), fixed_xi(Vec::Zero(N)), tag + "_x");
            E[kOne].add(c);
            const int base = m_.num_vars() - static_cast<int>(core_.J());
            for (int n = 0; n < N; ++n) {
                LinExpr row;
                for (int j = 0; j < core_.J(); ++j)
                    if (core_.Q(j, n) != 0.0) row.add(base + j, core_.Q(j, n));
                row.add(diff[n], -1.0);
                if (std::isfinite(sup.upper[n])) {
                    const int t = m_.add_var(fmt::format("{}_tu{}", tag, n), 0.0, kInf);
                    row.add(t, -1.0);
                    E[kOne].add(t, sup.upper[n]);
                }
                if (std::isfinite(sup.lower[n])) {
                    const int t = m_.add_var(fmt::format("{}_tl{}", tag, n), 0.0, kInf);
                    row.add(t, 1.0);
                    E[kOne].add(t, -sup.lower[n]);
                }
                m_.add_row(fmt::format("{}_m{}", tag, n), row, Sense::Equal, 0.0);
            }
            return emit(E, tag);
        }
        if (sup.kind == Support::Kind::Grid && st_.separable) {
            E[kOne].add(const_cost());
            for (int n = 0; n < N; ++n) {
                const int a = m_.add_var(fmt::format("{}_a{}", tag, n), -kInf, kInf);
                E[kOne].add(a, 1.0);
                std::vector<double> vals = sup.values[n];
                const double vmin = *std::min_element(vals.begin(), vals.end());
                const double vmax = *std::max_element(vals.begin(), vals.end());
                const bool affine_in_v = st_.by_coord[n].empty() || (linear_coord(n) && vmin >= 0.0);
                if (opts_.reduce_support && !second && affine_in_v) vals = vmin == vmax ? std::vector{vmin} : std::vector{vmin, vmax};
                for (double v : vals) {
                    LinExpr row;
                    row.add(a, 1.0).add(diff[n], v);
                    if (second) row.add(diff[N + n], v * v);
                    row.add(coord_cost(n, v), -1.0);
                    m_.add_row(fmt::format("{}_s{}", tag, n), row, Sense::GreaterEqual, 0.0);
                }
            }
            return emit(E, tag);
        }
        const std::vector<Vec> pts = sup.kind == Support::Kind::Grid ? grid_points(sup, 20000) : sup.points;
        const int alpha = m_.add_var(tag + "_alpha", -kInf, kInf);
        E[kOne].add(alpha, 1.0);
        for (const auto& xi : pts) {
            const Vec f = moment_basis(kind, xi);
            LinExpr row;
            row.add(alpha, 1.0);
            for (int m = 0; m < M; ++m) row.add(diff[m], f[m]);
            row.add(point_cost(xi), -1.0);
            m_.add_row(tag + "_s", row, Sense::GreaterEqual, 0.0);
        }
        return emit(E, tag);
    }

    std::vector<Poly> sample_polys(const WassersteinMode& wm, int k) const {
        std::vector<Poly> out;
        for (int n = 0; n < core_.N(); ++n) out.push_back(affine_row(wm.samples[k], n));
        return out;
    }

    // every sample stays in [lo, hi] for all y in the first-stage box
    bool samples_inside(const WassersteinMode& wm, const Vec& lo, const Vec& hi) const {
        for (int k = 0; k < wm.K(); ++k)
            for (int n = 0; n < core_.N(); ++n) {
                const auto [a, b] = range(affine_row(wm.samples[k], n));
                if (a < lo[n] - 1e-12 || b > hi[n] + 1e-12) return false;
            }
        return true;
    }

    bool all_linear() const {
        if (!st_.separable) return false;
        for (int n = 0; n < core_.N(); ++n)
            if (!st_.by_coord[n].empty() && !linear_coord(n)) return false;
        return true;
    }

    // sum over samples of the dual of sup_xi h(xi) - gamma ||xi - xi_k||, T = 0
    LinExpr wasserstein_sum(const WassersteinMode& wm, int gamma, const std::string& tag) {
        if (!core_.T_is_zero()) throw PreconditionViolated("objective-uncertainty builders need T(y) = 0");
        const int N = core_.N(), K = wm.K();
        Vec lo, hi;
        const bool box = wm.C.rows() > 0 && support_box(wm.C, wm.d, N, lo, hi);
        PolySum sum;
        if (box && wm.norm == NormOrder::One && all_linear() && lo.minCoeff() >= 0.0 && hi.allFinite() &&
            samples_inside(wm, lo, hi)) {
            // each coordinate and sample: min xi_k t + (hi - xi_k) mu+ + (xi_k - lo) mu- with |t - mu+ + mu-| <= gamma;
            // the optimal mu does not depend on the sample, so one pair per coordinate suffices
            sum[kOne].add(const_cost(), K);
            for (int n = 0; n < N; ++n) {
                if (st_.by_coord[n].empty()) continue;
                const int t = unit_var(n);
                const int up = multiplier(fmt::format("{}_mp{}", tag, n), false);
                const int dn = multiplier(fmt::format("{}_mm{}", tag, n), false);
                LinExpr v;
                v.add(t, 1.0).add(up, -1.0).add(dn, 1.0);
                m_.add_row(fmt::format("{}_g{}a", tag, n), LinExpr(v).add(gamma, -1.0), Sense::LessEqual, 0.0);
                m_.add_row(fmt::format("{}_g{}b", tag, n), LinExpr(v).add(gamma, 1.0), Sense::GreaterEqual, 0.0);
                Poly s;
                for (int k = 0; k < K; ++k) add_to(s, affine_row(wm.samples[k], n));
                accumulate(sum, s, v);
                sum[kOne].add(up, K * hi[n]).add(dn, -K * lo[n]);
            }
            return emit(sum, tag);
        }
        const int H = static_cast<int>(wm.C.rows());
        for (int k = 0; k < K; ++k) {
            const std::string kt = fmt::format("{}_k{}", tag, k);
            const int first = m_.num_vars();
            const LinExpr c = copy(all_x(), all_rows(), fixed_xi(Vec::Zero(N)), kt);
            sum[kOne].add(c);
            std::vector<int> mu(H);
            for (int h = 0; h < H; ++h) {
                mu[h] = multiplier(fmt::format("{}_mu{}", kt, h), false);
                sum[kOne].add(mu[h], wm.d[h]);
            }
            std::vector<LinExpr> v(N);
            for (int n = 0; n < N; ++n) {
                for (int j = 0; j < core_.J(); ++j)
                    if (core_.Q(j, n) != 0.0) v[n].add(first + j, core_.Q(j, n));
                for (int h = 0; h < H; ++h)
                    if (wm.C(h, n) != 0.0) v[n].add(mu[h], -wm.C(h, n));
                accumulate(sum, affine_row(wm.samples[k], n), v[n]);
            }
            dual_norm_rows(v, gamma, wm.norm, kt);
        }
        return emit(sum, tag);
    }

    // ||v||_* <= gamma for the dual of the ground norm
    void dual_norm_rows(const std::vector<LinExpr>& v, int gamma, NormOrder norm, const std::string& tag) {
        const int N = static_cast<int>(v.size());
        if (norm == NormOrder::One) {
            for (int n = 0; n < N; ++n) {
                m_.add_row(fmt::format("{}_n{}a", tag, n), LinExpr(v[n]).add(gamma, -1.0), Sense::LessEqual, 0.0);
                m_.add_row(fmt::format("{}_n{}b", tag, n), LinExpr(v[n]).add(gamma, 1.0), Sense::GreaterEqual, 0.0);
            }
        } else if (norm == NormOrder::Inf) {
            LinExpr total;
            for (int n = 0; n < N; ++n) {
                const int a = m_.add_var(fmt::format("{}_abs{}", tag, n), 0.0, kInf);
                m_.add_row(fmt::format("{}_n{}a", tag, n), LinExpr(v[n]).add(a, -1.0), Sense::LessEqual, 0.0);
                m_.add_row(fmt::format("{}_n{}b", tag, n), LinExpr(v[n]).add(a, 1.0), Sense::GreaterEqual, 0.0);
                total.add(a, 1.0);
            }
            m_.add_row(tag + "_n", total.add(gamma, -1.0), Sense::LessEqual, 0.0);
        } else {
            m_.add_soc(tag + "_n", v, LinExpr().add(gamma, 1.0));
            mark_soc();
        }
    }

    // sum over samples of h(y, xi_k(y))
    LinExpr saa_sum(const WassersteinMode& wm, const std::string& tag) {
        const int N = core_.N(), K = wm.K();
        PolySum sum;
        if (core_.T_is_zero() && all_linear() && samples_inside(wm, Vec::Zero(N), Vec::Constant(N, kInf))) {
            sum[kOne].add(const_cost(), K);
            for (int n = 0; n < N; ++n) {
                if (st_.by_coord[n].empty()) continue;
                Poly s;
                for (int k = 0; k < K; ++k) add_to(s, affine_row(wm.samples[k], n));
                accumulate(sum, s, LinExpr().add(unit_var(n), 1.0));
            }
            return emit(sum, tag);
        }
        LinExpr out;
        for (int k = 0; k < K; ++k) out.add(copy(all_x(), all_rows(), sample_polys(wm, k), fmt::format("{}_k{}", tag, k)));
        return out;
    }

    // worst case over the Wasserstein ball with unbounded support and Q = 0
    LinExpr constraint_block(const WassersteinMode& wm, const std::string& tag) {
        const int N = core_.N(), J = core_.J(), K = wm.K();
        const int gamma = m_.add_var(tag + "_gamma", 0.0, kInf);
        for (int n = 0; n < N; ++n) {
            for (int sign : {1, -1}) {
                const std::string dt = fmt::format("{}_{}{}", tag, sign > 0 ? "phi" : "psi", n);
                std::vector<int> d(J);
                LinExpr qd;
                for (int j = 0; j < J; ++j) {
                    d[j] = m_.add_var(fmt::format("{}_{}", dt, j), core_.x_lower[j], kInf);
                    if (core_.q[j] != 0.0) qd.add(d[j], core_.q[j]);
                }
                for (int s = 0; s < core_.S(); ++s) {
                    LinExpr row;
                    for (int j = 0; j < J; ++j)
                        if (core_.W(s, j) != 0.0) row.add(d[j], core_.W(s, j));
                    row.add(linear(affine_row(core_.T[n], s)), -sign);
                    m_.add_row(fmt::format("{}_r{}", dt, s), row, core_.sense[s], 0.0);
                }
                m_.add_row(dt + "_g", qd.add(gamma, -1.0), Sense::LessEqual, 0.0);
            }
        }
        LinExpr e;
        e.add(gamma, wm.radius);
        for (int k = 0; k < K; ++k)
            e.add(copy(all_x(), all_rows(), sample_polys(wm, k), fmt::format("{}_k{}", tag, k)), 1.0 / K);
        return e;
    }

    // ---------------------------------------------------------- objectives

    void variation_objective(const std::vector<LinExpr>& E, const std::vector<Poly>& p, double rho) {
        const int L = static_cast<int>(E.size());
        const int eta = m_.add_var("eta", -kInf, kInf);
        const int lam = m_.add_var("lambda", 0.0, kInf);
        m_.add_obj(eta, 1.0);
        m_.add_obj(lam, rho);
        PolySum obj;
        for (int l = 0; l < L; ++l) {
            const int r = value_var(fmt::format("r{}", l), !is_constant(p[l]));
            LinExpr a = E[l];
            a.add(eta, -1.0);
            m_.add_row(fmt::format("r{}_def", l), LinExpr(a).add(r, -1.0), Sense::LessEqual, 0.0);
            m_.add_row(fmt::format("lambda{}", l), LinExpr(a).add(lam, -1.0), Sense::LessEqual, 0.0);
            m_.add_row(fmt::format("r{}_lo", l), {{r, 1.0}, {lam, 1.0}}, Sense::GreaterEqual, 0.0);
            accumulate(obj, p[l], LinExpr().add(r, 1.0));
        }
        m_.add_obj(emit(obj, "pr"));
    }

    void chi2_objective(const std::vector<LinExpr>& E, const std::vector<Poly>& p, double rho) {
        const int L = static_cast<int>(E.size());
        const int eta = m_.add_var("eta", -kInf, kInf);
        const int lam = m_.add_var("lambda", 0.0, kInf);
        m_.add_obj(eta, 1.0);
        m_.add_obj(lam, rho + 2.0);
        PolySum obj;
        for (int l = 0; l < L; ++l) {
            const int r = is_constant(p[l]) ? m_.add_var(fmt::format("r{}", l), 0.0, kInf)
                                            : capped_var(fmt::format("r{}", l), 0.0, cap_value_);
            LinExpr a = E[l];
            a.add(eta, -1.0);
            m_.add_row(fmt::format("lambda{}", l), LinExpr(a).add(lam, -1.0), Sense::LessEqual, 0.0);
            LinExpr half;
            half.add(a, 0.5);
            m_.add_soc(fmt::format("chi{}", l), {LinExpr().add(r, 1.0), half}, LinExpr().add(lam, 1.0).add(a, -0.5));
            accumulate(obj, p[l], LinExpr().add(r, 1.0), -2.0);
        }
        m_.add_obj(emit(obj, "pr"));
        mark_soc();
    }

    void expected_objective(const std::vector<LinExpr>& E, const std::vector<Poly>& p) {
        PolySum obj;
        for (int l = 0; l < static_cast<int>(E.size()); ++l) {
            if (is_constant(p[l])) {
                obj[kOne].add(E[l], constant_of(p[l]));
                continue;
            }
            const int s = value_var(fmt::format("s{}", l), true);
            m_.add_row(fmt::format("s{}_def", l), LinExpr(E[l]).add(s, -1.0), Sense::LessEqual, 0.0);
            accumulate(obj, p[l], LinExpr().add(s, 1.0));
        }
        m_.add_obj(emit(obj, "ps"));
    }

private:
    void first_stage() {
        const auto& f = inst_.first;
        const int I = f.I();
        for (int i = 0; i < I; ++i) {
            const int v = binary_ ? m_.add_binary(fmt::format("y{}", i))
                                  : m_.add_var(fmt::format("y{}", i), f.lower[i], f.upper[i]);
            out_.y.push_back(v);
            m_.add_obj(v, f.costs[i]);
        }
        for (std::size_t r = 0; r < f.side.size(); ++r) {
            LinExpr e;
            for (int i = 0; i < I; ++i)
                if (f.side[r].coef[i] != 0.0) e.add(out_.y[i], f.side[r].coef[i]);
            m_.add_row(fmt::format("side{}", r), e, f.side[r].sense, f.side[r].rhs);
        }
    }

    // sum over coordinates of the largest magnitude a scenario can take
    double scenario_scale() const {
        double total = 0.0;
        for (int n = 0; n < core_.N(); ++n) {
            double a = 0.0;
            for (const auto& mode : inst_.modes) {
                if (const auto* mm = std::get_if<MomentMode>(&mode)) {
                    const double lo = mm->support.coord_min(n), hi = mm->support.coord_max(n);
                    if (std::isfinite(lo)) a = std::max(a, std::abs(lo));
                    if (std::isfinite(hi)) a = std::max(a, std::abs(hi));
                } else {
                    const auto& wm = std::get<WassersteinMode>(mode);
                    for (const auto& s : wm.samples) {
                        const auto [lo, hi] = range(affine_row(s, n));
                        a = std::max({a, std::abs(lo), std::abs(hi)});
                    }
                    Vec blo, bhi;
                    if (wm.C.rows() > 0 && support_box(wm.C, wm.d, core_.N(), blo, bhi)) {
                        if (std::isfinite(blo[n])) a = std::max(a, std::abs(blo[n]));
                        if (std::isfinite(bhi[n])) a = std::max(a, std::abs(bhi[n]));
                    }
                }
            }
            total += a;
        }
        double xs = 1.0;
        for (int j = 0; j < core_.J(); ++j) {
            if (std::isfinite(xhi_[j])) xs = std::max(xs, std::abs(xhi_[j]));
            if (std::isfinite(xlo_[j])) xs = std::max(xs, std::abs(xlo_[j]));
        }
        return total * xs;
    }

    const D3ROInstance& inst_;
    const SecondStageCore& core_;
    BuildOptions opts_;
    BuiltModel out_;
    ModelIR& m_;
    bool binary_ = true;
    Vec ylo_, yhi_, xlo_, xhi_;
    double big_ = 0.0, cap_value_ = 0.0;
    RecourseStructure st_;
    std::map<std::pair<int, int>, int> pairs_;
    std::map<std::pair<int, double>, LinExpr> coord_cache_;
    std::vector<int> unit_;
    std::optional<LinExpr> const_;
    int points_ = 0;
};

void need_moment(const D3ROInstance& inst, ReformKind kind) {
    if (!inst.all_moment()) throw PreconditionViolated(to_string(kind) + " needs moment modes");
}
void need_wasserstein(const D3ROInstance& inst, ReformKind kind) {
    if (!inst.all_wasserstein()) throw PreconditionViolated(to_string(kind) + " needs Wasserstein modes");
}

std::vector<Poly> bound_polys(const AffineMap& a) {
    std::vector<Poly> out;
    for (int r = 0; r < a.out_dim(); ++r) out.push_back(affine_row(a, r));
    return out;
}

LinExpr moment_mode(Builder& b, const MomentMode& mm, int l) {
    return b.moment_block(mm.kind, bound_polys(mm.lower), bound_polys(mm.upper), mm.support, fmt::format("m{}", l));
}

LinExpr wasserstein_mode(Builder& b, const WassersteinMode& wm, int l) {
    const int gamma = b.model().add_var(fmt::format("gamma{}", l), 0.0, kInf);
    LinExpr e = b.wasserstein_sum(wm, gamma, fmt::format("w{}", l));
    LinExpr out;
    out.add(e, 1.0 / wm.K()).add(gamma, wm.radius);
    return out;
}

void finish_multimodal(Builder& b, const std::vector<LinExpr>& E, ReformKind kind) {
    const auto p = probability_polys(b.inst().mode_prob, b.inst().I());
    if (is_chi2(kind)) b.chi2_objective(E, p, b.inst().rho);
    else b.variation_objective(E, p, b.inst().rho);
}

BuiltModel build_moment(const D3ROInstance& inst, ReformKind kind, const BuildOptions& opts) {
    need_moment(inst, kind);
    Builder b(inst, opts, kind);
    std::vector<LinExpr> E;
    for (int l = 0; l < inst.L(); ++l) E.push_back(moment_mode(b, std::get<MomentMode>(inst.modes[l]), l));
    finish_multimodal(b, E, kind);
    return b.finish();
}

BuiltModel build_wasserstein(const D3ROInstance& inst, ReformKind kind, const BuildOptions& opts) {
    need_wasserstein(inst, kind);
    if (!inst.second.T_is_zero()) throw PreconditionViolated(to_string(kind) + " needs T(y) = 0");
    Builder b(inst, opts, kind);
    std::vector<LinExpr> E;
    for (int l = 0; l < inst.L(); ++l) E.push_back(wasserstein_mode(b, std::get<WassersteinMode>(inst.modes[l]), l));
    finish_multimodal(b, E, kind);
    return b.finish();
}

void check_constraint_kind(const D3ROInstance& inst) {
    const auto& core = inst.second;
    if (!core.Q.isZero(0.0)) throw PreconditionViolated("constraint uncertainty needs Q = 0");
    for (const auto& mode : inst.modes) {
        const auto& wm = std::get<WassersteinMode>(mode);
        if (wm.C.rows() != 0) throw PreconditionViolated("constraint uncertainty needs unbounded support");
        if (wm.norm != NormOrder::One) throw PreconditionViolated("constraint uncertainty needs the 1-norm");
    }
    if (!recourse_dual_feasible(core)) throw DualInfeasible("recourse dual {W^T w <= q, w >= 0} is empty");
}

}  // namespace

double default_big(const D3ROInstance& inst) {
    double s = 1.0;
    if (inst.second.Q.size() > 0) s = std::max(s, inst.second.Q.cwiseAbs().maxCoeff());
    if (inst.second.q.size() > 0) s = std::max(s, inst.second.q.cwiseAbs().maxCoeff());
    return 100.0 * s;
}

std::array<int, 4> mccormick_block(ModelIR& m, int z, int x, int y, double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw PreconditionViolated("McCormick block needs finite bounds");
    std::array<int, 4> r;
    r[0] = m.add_row("mc_a", {{z, 1.0}, {x, -1.0}, {y, -lo}}, Sense::LessEqual, -lo);
    r[1] = m.add_row("mc_b", {{z, 1.0}, {x, -1.0}, {y, -hi}}, Sense::GreaterEqual, -hi);
    r[2] = m.add_row("mc_c", {{z, 1.0}, {y, -hi}}, Sense::LessEqual, 0.0);
    r[3] = m.add_row("mc_d", {{z, 1.0}, {y, -lo}}, Sense::GreaterEqual, 0.0);
    return r;
}

BuiltModel build_variation_moment(const D3ROInstance& inst, const BuildOptions& opts) {
    if (inst.distance != ModeDistance::Variation) throw PreconditionViolated("instance uses the chi-square distance");
    return build_moment(inst, ReformKind::MM_M_Variation, opts);
}

BuiltModel build_chi2_moment(const D3ROInstance& inst, const BuildOptions& opts) {
    if (inst.distance != ModeDistance::ChiSquare) throw PreconditionViolated("instance uses the variation distance");
    return build_moment(inst, ReformKind::MM_M_Chi2, opts);
}

BuiltModel build_variation_wasserstein_obj(const D3ROInstance& inst, const BuildOptions& opts) {
    if (inst.distance != ModeDistance::Variation) throw PreconditionViolated("instance uses the chi-square distance");
    return build_wasserstein(inst, ReformKind::MM_D_Variation_Obj, opts);
}

BuiltModel build_chi2_wasserstein_obj(const D3ROInstance& inst, const BuildOptions& opts) {
    if (inst.distance != ModeDistance::ChiSquare) throw PreconditionViolated("instance uses the variation distance");
    return build_wasserstein(inst, ReformKind::MM_D_Chi2_Obj, opts);
}

BuiltModel build_constraint_uncertainty(const D3ROInstance& inst, ModeDistance distance, const BuildOptions& opts) {
    const ReformKind kind =
        distance == ModeDistance::ChiSquare ? ReformKind::MM_D_Chi2_Constr : ReformKind::MM_D_Variation_Constr;
    need_wasserstein(inst, kind);
    check_constraint_kind(inst);
    Builder b(inst, opts, kind);
    std::vector<LinExpr> E;
    for (int l = 0; l < inst.L(); ++l)
        E.push_back(b.constraint_block(std::get<WassersteinMode>(inst.modes[l]), fmt::format("c{}", l)));
    finish_multimodal(b, E, kind);
    return b.finish();
}

BuiltModel build_single_modal_baseline(const D3ROInstance& inst, ReformKind kind, const BuildOptions& opts) {
    const int L = inst.L();
    if (kind == ReformKind::SM_M) {
        need_moment(inst, kind);
        Builder b(inst, opts, kind);
        const auto p = probability_polys(inst.mode_prob, inst.I());
        const auto& m0 = std::get<MomentMode>(inst.modes[0]);
        const int M = m0.M();
        std::vector<Poly> lo(M), hi(M);
        std::vector<const Support*> sup;
        for (int l = 0; l < L; ++l) {
            const auto& mm = std::get<MomentMode>(inst.modes[l]);
            if (mm.kind != m0.kind) throw PreconditionViolated("SM_M needs one moment kind across modes");
            Poly plo = p[l], phi = p[l];
            plo[kOne] -= inst.rho;
            phi[kOne] += inst.rho;
            for (int m = 0; m < M; ++m) {
                add_to(lo[m], multiply(plo, affine_row(mm.lower, m), b.binary()));
                add_to(hi[m], multiply(phi, affine_row(mm.upper, m), b.binary()));
            }
            sup.push_back(&mm.support);
        }
        const LinExpr E = b.moment_block(m0.kind, lo, hi, pooled_support(sup, inst.N()), "sm");
        b.model().add_obj(E);
        return b.finish();
    }
    if (kind == ReformKind::SM_D) {
        need_wasserstein(inst, kind);
        const auto& w0 = std::get<WassersteinMode>(inst.modes[0]);
        for (const auto& mode : inst.modes) {
            const auto& wm = std::get<WassersteinMode>(mode);
            if (wm.norm != w0.norm || wm.C != w0.C || wm.d != w0.d)
                throw PreconditionViolated("SM_D needs one support polytope and norm across modes");
        }
        const double diam = support_diameter(w0.C, w0.d, inst.N(), w0.norm);
        Builder b(inst, opts, kind);
        const auto p = probability_polys(inst.mode_prob, inst.I());
        const int gamma = b.multiplier("gamma", false);
        Poly radius = constant_poly(inst.rho * diam);
        for (int l = 0; l < L; ++l) add_to(radius, p[l], std::get<WassersteinMode>(inst.modes[l]).radius);
        PolySum E;
        Builder::accumulate(E, radius, LinExpr().add(gamma, 1.0));
        for (int l = 0; l < L; ++l) {
            const auto& wm = std::get<WassersteinMode>(inst.modes[l]);
            Builder::accumulate(E, p[l], b.wasserstein_sum(wm, gamma, fmt::format("w{}", l)), 1.0 / wm.K());
        }
        b.model().add_obj(b.emit(E, "sm"));
        return b.finish();
    }
    throw PreconditionViolated("single-modal baseline kind must be SM_M or SM_D");
}

BuiltModel build(const D3ROInstance& inst, ReformKind kind, const BuildOptions& opts) {
    switch (kind) {
        case ReformKind::MM_M_Variation:
        case ReformKind::MM_M_Chi2:
            return build_moment(inst, kind, opts);
        case ReformKind::MM_D_Variation_Obj:
        case ReformKind::MM_D_Chi2_Obj:
            return build_wasserstein(inst, kind, opts);
        case ReformKind::MM_D_Variation_Constr:
            return build_constraint_uncertainty(inst, ModeDistance::Variation, opts);
        case ReformKind::MM_D_Chi2_Constr:
            return build_constraint_uncertainty(inst, ModeDistance::ChiSquare, opts);
        case ReformKind::SM_M:
        case ReformKind::SM_D:
            return build_single_modal_baseline(inst, kind, opts);
        case ReformKind::DI: {
            BuiltModel b = build(decision_independent(inst), multimodal_kind(inst), opts);
            b.kind = ReformKind::DI;
            return b;
        }
        case ReformKind::DD_SAA: {
            need_wasserstein(inst, kind);
            Builder b(inst, opts, kind);
            std::vector<LinExpr> E;
            for (int l = 0; l < inst.L(); ++l) {
                const auto& wm = std::get<WassersteinMode>(inst.modes[l]);
                E.push_back(LinExpr().add(b.saa_sum(wm, fmt::format("w{}", l)), 1.0 / wm.K()));
            }
            b.expected_objective(E, probability_polys(inst.mode_prob, inst.I()));
            return b.finish();
        }
        case ReformKind::MM_DD_SP: {
            Builder b(inst, opts, kind);
            std::vector<LinExpr> E;
            for (int l = 0; l < inst.L(); ++l) {
                if (const auto* mm = std::get_if<MomentMode>(&inst.modes[l])) {
                    E.push_back(moment_mode(b, *mm, l));
                } else {
                    const auto& wm = std::get<WassersteinMode>(inst.modes[l]);
                    if (inst.second.T_is_zero()) {
                        E.push_back(wasserstein_mode(b, wm, l));
                    } else {
                        check_constraint_kind(inst);
                        E.push_back(b.constraint_block(wm, fmt::format("c{}", l)));
                    }
                }
            }
            b.expected_objective(E, probability_polys(inst.mode_prob, inst.I()));
            return b.finish();
        }
    }
    throw PreconditionViolated("unknown model kind");
}

// ---------------------------------------------------------------- solving

SolveReport solve_fixed_y(const BuiltModel& built, const Vec& y, const SolverOptions& opts) {
    ModelIR m = built.model;
    const bool binary = m.has_binaries();
    for (auto& v : m.vars) v.kind = VarKind::Continuous;
    for (std::size_t i = 0; i < built.y.size(); ++i) {
        const double v = binary ? std::round(y[i]) : y[i];
        m.vars[built.y[i]].lower = v;
        m.vars[built.y[i]].upper = v;
    }
    return solve_lp(m, opts);
}

namespace {

Vec extract_y(const BuiltModel& b, const std::vector<double>& x) {
    Vec y(b.y.size());
    for (std::size_t i = 0; i < b.y.size(); ++i) y[i] = x[b.y[i]];
    if (b.model.has_binaries()) y = y.array().round();
    return y;
}

bool cap_binds(const BuiltModel& b, const std::vector<double>& x) {
    for (const auto& [v, cap] : b.capped)
        if (std::abs(x[v]) >= 0.99 * cap) return true;
    return false;
}

bool emptiness_certified(const D3ROInstance& inst, ReformKind kind, const Vec& y) {
    try {
        return evaluate_inner(inst, kind, y).unbounded;
    } catch (const D3ROError&) {
        return false;
    }
}

}  // namespace

InstanceSolve solve_instance(const D3ROInstance& inst, ReformKind kind, const SolveOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count(); };
    InstanceSolve out;
    const bool chi = is_chi2(kind) || (kind == ReformKind::DI && is_chi2(multimodal_kind(inst)));
    if (chi) {
        out.via_enumeration = true;
        out.report = solve_by_enumeration(inst, kind, opts.enumeration);
        if (!out.report.primal.empty()) out.y = Vec::Map(out.report.primal.data(), inst.I());
        if (out.report.status == Status::Unbounded) out.report.objective = -kInf;
        return out;
    }
    BuildOptions bo = opts.build;
    bo.big = bo.big > 0.0 ? bo.big : default_big(inst);
    std::optional<double> previous;
    Vec prev_y;
    for (int esc = 0;; ++esc) {
        const BuiltModel built = build(inst, kind, bo);
        SolveReport rep = solve_milp(built.model, opts.solver);
        out.big = bo.big;
        out.escalations = esc;
        if (rep.status != Status::Optimal) {
            out.report = rep;
            if (!rep.primal.empty()) out.y = extract_y(built, rep.primal);
            break;
        }
        out.y = extract_y(built, rep.primal);
        SolveReport fixed = solve_fixed_y(built, out.y, opts.solver);
        if (fixed.status == Status::Optimal) {
            rep.objective = fixed.objective;
            rep.primal = fixed.primal;
        }
        out.report = rep;
        if (!cap_binds(built, rep.primal)) break;
        if (emptiness_certified(inst, kind, out.y)) {
            out.report.status = Status::Unbounded;
            out.report.objective = -kInf;
            break;
        }
        if (previous && std::abs(*previous - rep.objective) <= 1e-9 * (1.0 + std::abs(rep.objective)) &&
            prev_y == out.y)
            break;  // the cap binds without changing the value
        if (esc >= opts.max_escalations) {
            out.cap_active = true;
            break;
        }
        previous = rep.objective;
        prev_y = out.y;
        bo.big *= 10.0;
    }
    // bound signs of the pooled moment baseline are checked at the incumbent
    if (kind == ReformKind::SM_M && out.report.status == Status::Optimal) evaluate_inner(inst, kind, out.y);
    out.report.wall_ms = elapsed();
    return out;
}

}  // namespace d3ro
