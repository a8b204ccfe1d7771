#include "d3ro/instances.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "d3ro/oracle.hpp"
#include "d3ro/reformulate.hpp"
#include "d3ro/structure.hpp"

namespace d3ro {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Mat fig2_facilities() {
    Mat m(5, 2);
    m << 33, 52, 10, 72, 90, 5, 7, 18, 24, 87;
    return m;
}

Mat fig2_customers() {
    Mat m(10, 2);
    m << 42, 73, 4, 47, 91, 83, 13, 65, 47, 59, 14, 85, 93, 40, 62, 60, 26, 80, 63, 99;
    return m;
}

FacilityData gen_facility(const FacilityConfig& cfg) {
    if (cfg.fig2 && (cfg.I != 5 || cfg.J != 10)) throw PreconditionViolated("fig2 preset has I=5 and J=10");
    const int I = cfg.I, J = cfg.J, L = static_cast<int>(cfg.p_bar.size());
    if (static_cast<int>(cfg.mu_ratio.size()) != L || static_cast<int>(cfg.strength.size()) != L ||
        static_cast<int>(cfg.p_slope.size()) != L)
        throw DimensionMismatch("facility config: per-mode lists differ in length");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

    FacilityData out;
    if (cfg.fig2) {
        out.facilities = fig2_facilities();
        out.customers = fig2_customers();
    } else {
        out.facilities.resize(I, 2);
        out.customers.resize(J, 2);
        for (int i = 0; i < I; ++i) out.facilities.row(i) << uniform(0, cfg.grid), uniform(0, cfg.grid);
        for (int j = 0; j < J; ++j) out.customers.row(j) << uniform(0, cfg.grid), uniform(0, cfg.grid);
    }
    Vec f(I), r(J), mu1(J);
    for (int i = 0; i < I; ++i) f[i] = uniform(cfg.f_lo, cfg.f_hi);
    for (int j = 0; j < J; ++j) r[j] = uniform(cfg.r_lo, cfg.r_hi);
    for (int j = 0; j < J; ++j) mu1[j] = uniform(cfg.mu_lo, cfg.mu_hi);
    Mat dist(I, J), kern(J, I);
    for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j) {
            dist(i, j) = (out.facilities.row(i) - out.customers.row(j)).norm();
            kern(j, i) = std::exp(-dist(i, j) / cfg.decay);
        }

    D3ROInstance& inst = out.instance;
    inst.first.costs = f;
    inst.first.kind = FirstStageKind::Binary;

    // x_ij at i*J + j, unmet fraction s_j at I*J + j; rows: demand j, then links (i, j)
    auto& core = inst.second;
    const int X = I * J + J, S = J + I * J;
    core.Q = Mat::Zero(X, J);
    core.q = Vec::Zero(X);
    core.W = Mat::Zero(S, X);
    core.sense.assign(S, Sense::GreaterEqual);
    core.x_lower = Vec::Zero(X);
    Vec rc = Vec::Zero(S);
    Mat rcoef = Mat::Zero(S, I);
    for (int j = 0; j < J; ++j) {
        for (int i = 0; i < I; ++i) {
            core.Q(i * J + j, j) = dist(i, j) - r[j];
            core.W(j, i * J + j) = 1.0;
            const int link = J + i * J + j;
            core.W(link, i * J + j) = -1.0;
            rcoef(link, i) = -1.0;
        }
        core.Q(I * J + j, j) = cfg.penalty;
        core.W(j, I * J + j) = 1.0;
        core.sense[j] = Sense::Equal;
        rc[j] = 1.0;
    }
    core.R = AffineMap(rc, rcoef);
    core.T.assign(J, AffineMap::fixed(Vec::Zero(S), I));

    std::vector<Vec> mu_bar(L);
    std::vector<Mat> mu_coef(L);
    for (int l = 0; l < L; ++l) {
        mu_bar[l] = cfg.mu_ratio[l] * mu1;
        mu_coef[l] = (cfg.strength[l] * mu_bar[l]).asDiagonal() * kern;
    }

    for (int l = 0; l < L; ++l) {
        if (!cfg.wasserstein) {
            MomentSpecialCase sc;
            sc.mu_bar = mu_bar[l];
            sc.sigma_bar = cfg.sigma_rel * mu_bar[l];
            sc.eps_mu = cfg.eps_mu_rel * mu_bar[l];
            sc.lambda_mu = cfg.strength[l] * kern;
            sc.lambda_s = sc.lambda_mu;
            sc.kind = cfg.moment_kind;
            Support sup = cfg.box_support
                              ? Support::box(Vec::Zero(J), Vec::Constant(J, cfg.support_K))
                              : [&] {
                                    std::vector<double> vals(cfg.support_K);
                                    std::iota(vals.begin(), vals.end(), 1.0);
                                    return Support::grid_uniform(J, vals);
                                }();
            inst.modes.emplace_back(moment_from_special_case(sc, std::move(sup)));
        } else {
            WassersteinMode wm;
            std::normal_distribution<double> noise(0.0, 1.0);
            for (int k = 0; k < cfg.samples.at(l); ++k) {
                Vec c(J);
                for (int j = 0; j < J; ++j) {
                    const double top = mu_bar[l][j] + mu_coef[l].row(j).cwiseMax(0.0).sum();
                    const double lo = -mu_bar[l][j], hi = cfg.support_hi - top;
                    if (hi < lo) throw PreconditionViolated("demand mean exceeds the support box");
                    const double e = cfg.sigma_rel * mu_bar[l][j] * noise(rng);
                    c[j] = mu_bar[l][j] + std::clamp(e, lo, hi);
                }
                wm.samples.emplace_back(c, mu_coef[l]);
            }
            wm.radius = cfg.radius.at(l);
            wm.C.resize(2 * J, J);
            wm.C << Mat::Identity(J, J), -Mat::Identity(J, J);
            wm.d.resize(2 * J);
            wm.d << Vec::Constant(J, cfg.support_hi), Vec::Zero(J);
            wm.norm = cfg.norm;
            inst.modes.emplace_back(std::move(wm));
        }
    }
    Mat slopes(L, I);
    for (int l = 0; l < L; ++l) slopes.row(l).setConstant(cfg.p_slope[l]);
    inst.mode_prob = AffineProb{Vec::Map(cfg.p_bar.data(), L), slopes};
    inst.rho = cfg.rho;
    inst.distance = cfg.distance;

    out.truth.prob = inst.mode_prob;
    for (int l = 0; l < L; ++l) {
        out.truth.mean.emplace_back(mu_bar[l], mu_coef[l]);
        out.truth.sigma.push_back(cfg.sigma_rel * mu_bar[l]);
    }
    out.truth.clip_zero = true;
    return out;
}

Vec shipment_probabilities(double price) {
    LinearScalingProb m{Vec::Map(std::vector<double>{0.1, 0.9}.data(), 2), {0}, 0};
    return mode_probabilities(m, Vec::Constant(1, price));
}

FacilityData gen_shipment(const ShipmentConfig& cfg, double price) {
    FacilityData out;
    D3ROInstance& inst = out.instance;
    const int I = 2;
    inst.first.costs = Vec::Constant(I, cfg.P1);
    inst.first.kind = FirstStageKind::Box;
    inst.first.lower = Vec::Zero(I);
    inst.first.upper = Vec::Constant(I, cfg.production_cap);

    // x = [x0, s_1, s_2, t_1, t_2]; x0 = 1 carries the revenue term -price * xi
    auto& core = inst.second;
    core.Q = Mat::Zero(5, 1);
    core.Q(0, 0) = -price;
    core.q.resize(5);
    core.q << 0.0, cfg.c, cfg.c, cfg.P2, cfg.P2;
    core.W = Mat::Zero(4, 5);
    core.W(0, 0) = 1.0;                     // x0 = 1
    core.W(1, 1) = core.W(1, 2) = 1.0;      // s_1 + s_2 - xi >= 0
    core.W(2, 1) = -1.0, core.W(2, 3) = 1.0;  // -s_i + t_i >= -y2_i
    core.W(3, 2) = -1.0, core.W(3, 4) = 1.0;
    core.sense = {Sense::Equal, Sense::GreaterEqual, Sense::GreaterEqual, Sense::GreaterEqual};
    core.x_lower = Vec::Zero(5);
    Vec rc(4);
    rc << 1.0, 0.0, 0.0, 0.0;
    Mat rcoef = Mat::Zero(4, I);
    rcoef(2, 0) = -1.0;
    rcoef(3, 1) = -1.0;
    core.R = AffineMap(rc, rcoef);
    Vec tc = Vec::Zero(4);
    tc[1] = -1.0;
    core.T = {AffineMap::fixed(tc, I)};

    const double mu[2] = {std::max(0.0, 10.0 - price), std::max(0.0, 10.0 - 2.0 * price)};
    std::vector<double> vals(cfg.support_max + 1);
    std::iota(vals.begin(), vals.end(), 0.0);
    for (int l = 0; l < 2; ++l) {
        MomentMode m;
        m.kind = MomentKind::First;
        m.lower = AffineMap::fixed(Vec::Constant(1, std::max(0.0, mu[l] - cfg.eps_mu)), I);
        m.upper = AffineMap::fixed(Vec::Constant(1, mu[l] + cfg.eps_mu), I);
        m.support = Support::grid_uniform(1, vals);
        inst.modes.emplace_back(std::move(m));
    }
    const Vec p = shipment_probabilities(price);
    inst.mode_prob = AffineProb{p, Mat::Zero(2, I)};
    inst.rho = cfg.rho;
    inst.distance = ModeDistance::Variation;

    out.truth.prob = inst.mode_prob;
    for (int l = 0; l < 2; ++l) {
        out.truth.mean.push_back(AffineMap::fixed(Vec::Constant(1, mu[l]), I));
        out.truth.sigma.push_back(Vec::Constant(1, cfg.sigma));
    }
    out.truth.clip_zero = true;
    return out;
}

ShipmentSolve solve_shipment_grid(const ShipmentConfig& cfg, ReformKind kind, double coarse, double fine,
                                  double price_max) {
    if (coarse <= 0.0 || fine <= 0.0 || price_max < 0.0 || price_max > 10.0)
        throw PreconditionViolated("price grid must lie in [0, 10] with positive steps");
    ShipmentSolve best;
    best.value = kInf;
    auto visit = [&](double price) {
        const FacilityData d = gen_shipment(cfg, price);
        const InstanceSolve s = solve_instance(d.instance, kind);
        ++best.evaluations;
        if (s.report.status == Status::Optimal && s.report.objective < best.value - 1e-12) {
            best.value = s.report.objective;
            best.price = price;
            best.plan = s.y;
        }
    };
    const long nc = static_cast<long>(std::floor(price_max / coarse + 1e-9));
    for (long k = 0; k <= nc; ++k) visit(k * coarse);
    if (!std::isfinite(best.value)) throw D3ROError("no grid price gave an optimal solve");
    const double centre = best.price;
    const long nf = static_cast<long>(std::floor(coarse / fine + 1e-9));
    for (long k = -nf; k <= nf; ++k) {
        const double price = centre + k * fine;
        if (k == 0 || price < -1e-12 || price > price_max + 1e-12) continue;
        visit(std::clamp(price, 0.0, price_max));
    }
    return best;
}

std::vector<int> scenario_counts(const Vec& p, int n) {
    const int L = static_cast<int>(p.size());
    std::vector<int> c(L);
    std::vector<double> frac(L);
    int used = 0;
    for (int l = 0; l < L; ++l) {
        const double e = p[l] * n;
        c[l] = static_cast<int>(std::floor(e + 1e-9));
        frac[l] = e - c[l];
        used += c[l];
    }
    std::vector<int> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return p[a] > p[b];
    });
    for (int t = 0; used < n; ++t, ++used) ++c[order[t % L]];
    for (int t = L - 1; used > n; --t) {
        const int l = order[(t % L + L) % L];
        if (c[l] > 0) {
            --c[l];
            --used;
        }
    }
    return c;
}

OosResult oos_evaluate(const D3ROInstance& inst, const GroundTruth& truth, const Vec& y, int n, std::uint64_t seed,
                       const Shift& shift) {
    Vec p = mode_probabilities(truth.prob, y);
    if (shift.kind == ShiftKind::ModeDelta) {
        if (p.size() < 2) throw PreconditionViolated("mode shift needs two modes");
        const double d = std::clamp(shift.value, -p[0], p[1]);
        p[0] += d;
        p[1] -= d;
    }
    OosResult res;
    res.counts = scenario_counts(p, n);
    res.first_stage = inst.first.costs.dot(y);
    const RecourseStructure st = analyze_recourse(inst.second);
    ScenarioCost cost(inst.second, st, y);
    const double alpha = shift.kind == ShiftKind::Skew ? shift.value : 0.0;
    const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
    const double zmean = delta * std::sqrt(2.0 / M_PI);
    const double zsd = std::sqrt(1.0 - 2.0 * delta * delta / M_PI);
    double total = 0.0;
    for (int l = 0; l < static_cast<int>(res.counts.size()); ++l) {
        Vec mean = truth.mean[l].eval(y);
        if (truth.clamp_mean) mean = mean.cwiseMax(0.0);
        if (shift.kind == ShiftKind::MeanShift) mean.array() += shift.value;
        for (int s = 0; s < res.counts[l]; ++s) {
            std::mt19937_64 rng(splitmix(seed ^ splitmix((static_cast<std::uint64_t>(l) << 32) + s)));
            std::normal_distribution<double> g(0.0, 1.0);
            Vec xi(mean.size());
            for (int j = 0; j < xi.size(); ++j) {
                double z = g(rng);
                if (shift.kind == ShiftKind::Skew) {
                    const double u0 = std::abs(g(rng));
                    z = (delta * u0 + std::sqrt(1.0 - delta * delta) * z - zmean) / zsd;
                }
                xi[j] = mean[j] + truth.sigma[l][j] * z;
                if (truth.clip_zero) xi[j] = std::max(0.0, xi[j]);
            }
            total += cost(xi);
        }
    }
    res.cost = res.first_stage + total / n;
    return res;
}

}  // namespace d3ro
