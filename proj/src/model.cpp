#include "d3ro/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "d3ro/lp.hpp"

namespace d3ro {

namespace {

constexpr double kSimplexTol = 1e-9;

void check_simplex(const Vec& p) {
    for (int l = 0; l < p.size(); ++l)
        if (p[l] < -kSimplexTol || p[l] > 1.0 + kSimplexTol)
            throw SimplexViolation(fmt::format("mode probability {} = {} outside [0,1]", l, p[l]));
    if (std::abs(p.sum() - 1.0) > kSimplexTol)
        throw SimplexViolation(fmt::format("mode probabilities sum to {}", p.sum()));
}

}  // namespace

AffineMap::AffineMap(Vec c, Mat a) : constant(std::move(c)), coef(std::move(a)) {
    if (coef.rows() != constant.size())
        throw DimensionMismatch(fmt::format("affine map: {} constants but {} coefficient rows",
                                            constant.size(), coef.rows()));
}

AffineMap AffineMap::fixed(const Vec& c, int num_first_stage) {
    return AffineMap(c, Mat::Zero(c.size(), num_first_stage));
}

Vec AffineMap::eval(const Vec& y) const {
    if (y.size() != coef.cols())
        throw DimensionMismatch(fmt::format("affine map expects y of length {}, got {}", coef.cols(), y.size()));
    return constant + coef * y;
}

Vec evaluate_affine(const AffineMap& map, const Vec& y) { return map.eval(y); }

Mat SecondStageCore::T_at(const Vec& y) const {
    Mat t(S(), N());
    for (int n = 0; n < N(); ++n) t.col(n) = T[n].eval(y);
    return t;
}

Vec SecondStageCore::R_at(const Vec& y) const { return R.eval(y); }

bool SecondStageCore::T_is_zero() const {
    for (const auto& col : T)
        if (!col.constant.isZero(0.0) || !col.is_constant()) return false;
    return true;
}

void SecondStageCore::validate(int num_first_stage) const {
    const int j = J(), s = S(), n = N();
    if (Q.rows() != j) throw DimensionMismatch("second stage: Q rows must equal length of q");
    if (W.cols() != j) throw DimensionMismatch("second stage: W columns must equal length of q");
    if (static_cast<int>(T.size()) != n) throw DimensionMismatch("second stage: T needs one column map per uncertain parameter");
    for (const auto& col : T)
        if (col.out_dim() != s || col.in_dim() != num_first_stage)
            throw DimensionMismatch("second stage: T column map has wrong shape");
    if (R.out_dim() != s || R.in_dim() != num_first_stage) throw DimensionMismatch("second stage: R has wrong shape");
    if (static_cast<int>(sense.size()) != s) throw DimensionMismatch("second stage: one sense per row required");
    for (Sense v : sense)
        if (v == Sense::LessEqual) throw PreconditionViolated("second stage rows must be >= or =");
    if (x_lower.size() != j) throw DimensionMismatch("second stage: x_lower must have length J");
}

int num_modes(const ModeProbabilityModel& m) {
    return std::visit(
        [](const auto& v) -> int {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, InterdictionProb>) return static_cast<int>(v.states.rows());
            else return static_cast<int>(v.base.size());
        },
        m);
}

Vec mode_probabilities(const ModeProbabilityModel& m, const Vec& y) {
    Vec p;
    if (const auto* a = std::get_if<AffineProb>(&m)) {
        if (y.size() != a->slopes.cols()) throw DimensionMismatch("affine mode probabilities: wrong length of y");
        p = a->base + a->slopes * y;
    } else if (const auto* s = std::get_if<LinearScalingProb>(&m)) {
        if (s->var < 0 || s->var >= y.size()) throw DimensionMismatch("linear scaling: decision index out of range");
        const double t = y[s->var];
        const int L = static_cast<int>(s->base.size());
        std::vector<bool> scaled(L, false);
        for (int l : s->scaled) scaled.at(l) = true;
        double scaled_mass = 0.0, rest_mass = 0.0;
        for (int l = 0; l < L; ++l) (scaled[l] ? scaled_mass : rest_mass) += s->base[l];
        p.resize(L);
        for (int l = 0; l < L; ++l)
            p[l] = scaled[l] ? s->base[l] * t : (1.0 - t * scaled_mass) / rest_mass * s->base[l];
    } else {
        const auto& d = std::get<InterdictionProb>(m);
        const int I = static_cast<int>(d.sigma0.size());
        if (y.size() != I) throw DimensionMismatch("interdiction: wrong length of y");
        for (int i = 0; i < I; ++i)
            if (y[i] != 0.0 && y[i] != 1.0) throw PreconditionViolated("interdiction requires binary y");
        p.resize(d.states.rows());
        for (int l = 0; l < d.states.rows(); ++l) {
            double prod = 1.0;
            for (int i = 0; i < I; ++i) {
                const double surv = (1.0 - y[i]) * d.sigma0[i] + y[i] * d.sigma1[i];
                prod *= d.states(l, i) ? surv : 1.0 - surv;
            }
            p[l] = prod;
        }
    }
    check_simplex(p);
    return p;
}

InterdictionProb make_interdiction(const Vec& sigma0, const Vec& sigma1) {
    const int I = static_cast<int>(sigma0.size());
    if (sigma1.size() != I) throw DimensionMismatch("interdiction: sigma0 and sigma1 differ in length");
    InterdictionProb m{sigma0, sigma1, Eigen::MatrixXi(1 << I, I)};
    for (int l = 0; l < (1 << I); ++l)
        for (int i = 0; i < I; ++i) m.states(l, i) = ((l >> (I - 1 - i)) & 1) ? 0 : 1;
    return m;
}

ModelIR interdiction_shaping_rows(const InterdictionProb& m) {
    const int I = static_cast<int>(m.sigma0.size());
    const int L = static_cast<int>(m.states.rows());
    for (int i = 0; i < I; ++i)
        if (m.sigma0[i] <= 0.0 || m.sigma0[i] >= 1.0)
            throw PreconditionViolated(fmt::format("interdiction: baseline survival of link {} must lie in (0,1)", i));
    ModelIR ir;
    for (int i = 0; i < I; ++i) ir.add_binary(fmt::format("y{}", i));
    std::vector<std::vector<int>> pi(L, std::vector<int>(I));
    for (int l = 0; l < L; ++l)
        for (int i = 0; i < I; ++i) pi[l][i] = ir.add_var(fmt::format("pi_{}_{}", l, i + 1), 0.0, 1.0);
    // pi_{l,0} is the all-baseline probability, a constant
    const Vec base = mode_probabilities(m, Vec::Zero(I));
    for (int l = 0; l < L; ++l) {
        for (int i = 0; i < I; ++i) {
            const double ratio = m.states(l, i) ? m.sigma1[i] / m.sigma0[i] : (1.0 - m.sigma1[i]) / (1.0 - m.sigma0[i]);
            LinExpr rec;
            rec.add(pi[l][i], 1.0).add(i, 1.0);
            LinExpr mono;
            mono.add(pi[l][i], 1.0).add(i, -1.0);
            if (i == 0) {
                ir.add_row(fmt::format("rec_{}_{}", l, i + 1), rec, Sense::LessEqual, ratio * base[l] + 1.0);
                ir.add_row(fmt::format("mono_{}_{}", l, i + 1), mono, Sense::LessEqual, base[l]);
            } else {
                rec.add(pi[l][i - 1], -ratio);
                mono.add(pi[l][i - 1], -1.0);
                ir.add_row(fmt::format("rec_{}_{}", l, i + 1), rec, Sense::LessEqual, 1.0);
                ir.add_row(fmt::format("mono_{}_{}", l, i + 1), mono, Sense::LessEqual, 0.0);
            }
        }
    }
    for (int i = 0; i < I; ++i) {
        std::vector<Term> t;
        for (int l = 0; l < L; ++l) t.push_back({pi[l][i], 1.0});
        ir.add_row(fmt::format("sum_{}", i + 1), t, Sense::Equal, 1.0);
    }
    return ir;
}

Support Support::discrete(std::vector<Vec> pts) {
    if (pts.empty()) throw PreconditionViolated("discrete support must be non-empty");
    Support s;
    s.kind = Kind::Discrete;
    s.points = std::move(pts);
    return s;
}

Support Support::grid(std::vector<std::vector<double>> vals) {
    for (const auto& v : vals)
        if (v.empty()) throw PreconditionViolated("grid support needs at least one value per coordinate");
    Support s;
    s.kind = Kind::Grid;
    s.values = std::move(vals);
    return s;
}

Support Support::grid_uniform(int N, const std::vector<double>& vals) {
    return grid(std::vector<std::vector<double>>(N, vals));
}

Support Support::box(Vec lo, Vec hi) {
    if (lo.size() != hi.size()) throw DimensionMismatch("box support bounds differ in length");
    for (int n = 0; n < lo.size(); ++n)
        if (!(lo[n] <= hi[n]) || !std::isfinite(lo[n]) || !std::isfinite(hi[n]))
            throw PreconditionViolated("box support needs finite lower <= upper");
    Support s;
    s.kind = Kind::Box;
    s.lower = std::move(lo);
    s.upper = std::move(hi);
    return s;
}

double Support::coord_min(int n) const {
    switch (kind) {
        case Kind::Discrete: {
            double v = kInf;
            for (const auto& p : points) v = std::min(v, p[n]);
            return v;
        }
        case Kind::Grid: return *std::min_element(values[n].begin(), values[n].end());
        case Kind::Box: return lower[n];
    }
    return 0.0;
}

double Support::coord_max(int n) const {
    switch (kind) {
        case Kind::Discrete: {
            double v = -kInf;
            for (const auto& p : points) v = std::max(v, p[n]);
            return v;
        }
        case Kind::Grid: return *std::max_element(values[n].begin(), values[n].end());
        case Kind::Box: return upper[n];
    }
    return 0.0;
}

Vec moment_basis(MomentKind kind, const Vec& xi) {
    if (kind == MomentKind::First) return xi;
    Vec f(2 * xi.size());
    f << xi, xi.array().square().matrix();
    return f;
}

MomentMode moment_from_special_case(const MomentSpecialCase& sc, Support support) {
    const int N = static_cast<int>(sc.mu_bar.size());
    const int I = static_cast<int>(sc.lambda_mu.cols());
    if (sc.lambda_mu.rows() != N || sc.eps_mu.size() != N)
        throw DimensionMismatch("moment special case: inconsistent lengths");
    const int M = sc.kind == MomentKind::First ? N : 2 * N;
    Vec lo(M), hi(M);
    Mat clo(M, I), chi(M, I);
    for (int n = 0; n < N; ++n) {
        lo[n] = sc.mu_bar[n] - sc.eps_mu[n];
        hi[n] = sc.mu_bar[n] + sc.eps_mu[n];
        clo.row(n) = sc.mu_bar[n] * sc.lambda_mu.row(n);
        chi.row(n) = clo.row(n);
    }
    if (sc.kind == MomentKind::FirstSecond) {
        if (sc.sigma_bar.size() != N || sc.lambda_s.rows() != N || sc.lambda_s.cols() != I)
            throw DimensionMismatch("moment special case: second-moment data has wrong shape");
        for (int n = 0; n < N; ++n) {
            const double s = sc.mu_bar[n] * sc.mu_bar[n] + sc.sigma_bar[n] * sc.sigma_bar[n];
            lo[N + n] = sc.eps_s_lo * s;
            hi[N + n] = sc.eps_s_hi * s;
            clo.row(N + n) = sc.eps_s_lo * s * sc.lambda_s.row(n);
            chi.row(N + n) = sc.eps_s_hi * s * sc.lambda_s.row(n);
        }
    }
    MomentMode m;
    m.kind = sc.kind;
    m.lower = AffineMap(lo, clo);
    m.upper = AffineMap(hi, chi);
    m.support = std::move(support);
    return m;
}

bool FirstStage::admits(const Vec& y, double tol) const {
    if (y.size() != I()) return false;
    for (int i = 0; i < I(); ++i) {
        if (kind == FirstStageKind::Binary) {
            if (y[i] != 0.0 && y[i] != 1.0) return false;
        } else if (y[i] < lower[i] - tol || y[i] > upper[i] + tol) {
            return false;
        }
    }
    for (const auto& r : side) {
        const double a = r.coef.dot(y);
        const double t = tol * (1.0 + std::abs(r.rhs));
        if (r.sense == Sense::LessEqual && a > r.rhs + t) return false;
        if (r.sense == Sense::GreaterEqual && a < r.rhs - t) return false;
        if (r.sense == Sense::Equal && std::abs(a - r.rhs) > t) return false;
    }
    return true;
}

bool D3ROInstance::all_moment() const {
    return std::all_of(modes.begin(), modes.end(), [](const auto& m) { return std::holds_alternative<MomentMode>(m); });
}

bool D3ROInstance::all_wasserstein() const {
    return std::all_of(modes.begin(), modes.end(),
                       [](const auto& m) { return std::holds_alternative<WassersteinMode>(m); });
}

void D3ROInstance::validate() const {
    const int i = I(), n = N();
    if (modes.empty()) throw PreconditionViolated("instance needs at least one mode");
    if (rho < 0.0) throw PreconditionViolated("rho must be nonnegative");
    if (num_modes(mode_prob) != L()) throw DimensionMismatch("mode-probability model and mode list differ in length");
    if (first.kind == FirstStageKind::Box && (first.lower.size() != i || first.upper.size() != i))
        throw DimensionMismatch("box first stage needs lower and upper bounds");
    for (const auto& r : first.side)
        if (r.coef.size() != i) throw DimensionMismatch("side constraint has wrong length");
    second.validate(i);
    if (const auto* a = std::get_if<AffineProb>(&mode_prob)) {
        if (a->slopes.rows() != L() || a->slopes.cols() != i) throw DimensionMismatch("affine slopes have wrong shape");
        if (std::abs(a->base.sum() - 1.0) > kSimplexTol) throw SimplexViolation("affine base probabilities must sum to 1");
        if (a->slopes.colwise().sum().cwiseAbs().maxCoeff() > kSimplexTol)
            throw SimplexViolation("affine slopes must sum to zero over modes");
    }
    for (const auto& mode : modes) {
        if (const auto* m = std::get_if<MomentMode>(&mode)) {
            const int M = m->kind == MomentKind::First ? n : 2 * n;
            if (m->lower.out_dim() != M || m->upper.out_dim() != M || m->lower.in_dim() != i ||
                m->upper.in_dim() != i)
                throw DimensionMismatch("moment bounds have wrong shape");
            const auto& s = m->support;
            if (s.kind == Support::Kind::Discrete) {
                if (s.points.empty()) throw PreconditionViolated("discrete support must be non-empty");
                for (const auto& p : s.points)
                    if (p.size() != n) throw DimensionMismatch("support point has wrong length");
            } else if (s.kind == Support::Kind::Grid) {
                if (static_cast<int>(s.values.size()) != n) throw DimensionMismatch("grid support has wrong length");
            } else if (s.lower.size() != n) {
                throw DimensionMismatch("box support has wrong length");
            }
        } else {
            const auto& w = std::get<WassersteinMode>(mode);
            if (w.radius < 0.0) throw PreconditionViolated("Wasserstein radius must be nonnegative");
            if (w.samples.empty()) throw PreconditionViolated("Wasserstein mode needs samples");
            for (const auto& s : w.samples)
                if (s.out_dim() != n || s.in_dim() != i) throw DimensionMismatch("sample map has wrong shape");
            if (w.C.cols() != n || w.C.rows() != w.d.size()) throw DimensionMismatch("support polytope has wrong shape");
            ModelIR feas;
            for (int k = 0; k < n; ++k) feas.add_var("xi", -kInf, kInf);
            for (int h = 0; h < w.C.rows(); ++h) {
                std::vector<Term> t;
                for (int k = 0; k < n; ++k)
                    if (w.C(h, k) != 0.0) t.push_back({k, w.C(h, k)});
                feas.add_row("c", t, Sense::LessEqual, w.d[h]);
            }
            if (solve_lp(feas).status != Status::Optimal) throw PreconditionViolated("Wasserstein support polytope is empty");
        }
    }
}

std::string to_string(ModeDistance d) { return d == ModeDistance::Variation ? "variation" : "chi2"; }

ModeDistance mode_distance_from_string(const std::string& s) {
    if (s == "variation") return ModeDistance::Variation;
    if (s == "chi2" || s == "chisquare") return ModeDistance::ChiSquare;
    throw std::invalid_argument("unknown mode distance: " + s);
}

}  // namespace d3ro
