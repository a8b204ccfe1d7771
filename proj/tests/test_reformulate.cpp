#include <cmath>
#include <random>

#include "doctest.h"
#include "d3ro/instances.hpp"
#include "d3ro/oracle.hpp"
#include "d3ro/reformulate.hpp"

using namespace d3ro;

namespace {

FacilityConfig small_config(std::uint64_t seed, bool wasserstein) {
    FacilityConfig c;
    c.I = 3;
    c.J = 4;
    c.seed = seed;
    c.wasserstein = wasserstein;
    c.samples = {6, 4, 3};
    c.eps_mu_rel = 0.1;
    c.rho = 0.2;
    if (wasserstein) c.radius = {0.3, 0.2, 0.1};
    return c;
}

bool same_value(double a, double b, double tol = 1e-6) {
    if (a == b) return true;
    return std::abs(a - b) <= tol * (1.0 + std::abs(b));
}

// MILP optimum and y equal the enumeration oracle
void check_against_oracle(const D3ROInstance& inst, ReformKind kind, const BuildOptions& bo = {}) {
    const SolveReport e = solve_by_enumeration(inst, kind);
    SolveOptions so;
    so.build = bo;
    const InstanceSolve r = solve_instance(inst, kind, so);
    INFO(to_string(kind));
    CHECK(r.report.status == e.status);
    CHECK(same_value(r.report.objective, e.objective));
    if (e.status == Status::Optimal)
        for (int i = 0; i < inst.I(); ++i) CHECK(r.y[i] == e.primal[i]);
}

double milp_value(const D3ROInstance& inst, ReformKind kind) { return solve_instance(inst, kind).report.objective; }

}  // namespace

TEST_CASE("McCormick rows are exact at the corners") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-50, 50);
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
        double lo = u(rng), hi = u(rng);
        if (lo > hi) std::swap(lo, hi);
        ModelIR m;
        const int x = m.add_var("x", lo, hi);
        const int y = m.add_var("y", 0.0, 1.0);
        const int z = m.add_var("z", -kInf, kInf);
        mccormick_block(m, z, x, y, lo, hi);
        for (double xv : {lo, hi})
            for (double yv : {0.0, 1.0})
                for (double dir : {1.0, -1.0}) {
                    ModelIR c = m;
                    c.vars[x].lower = c.vars[x].upper = xv;
                    c.vars[y].lower = c.vars[y].upper = yv;
                    c.obj[z] = dir;
                    const SolveReport r = solve_lp(c);
                    if (!r.optimal() || std::abs(r.primal[z] - xv * yv) > 1e-9 * (1.0 + std::abs(xv))) ++bad;
                }
    }
    CHECK(bad == 0);
    ModelIR m;
    m.add_var("x", 0.0, kInf);
    CHECK_THROWS_AS(mccormick_block(m, 0, 0, 0, 0.0, kInf), PreconditionViolated);
}

TEST_CASE("moment builds match the enumeration oracle") {
    for (std::uint64_t seed : {1, 2}) {
        const auto d = gen_facility(small_config(seed, false));
        check_against_oracle(d.instance, ReformKind::MM_M_Variation);
        check_against_oracle(d.instance, ReformKind::SM_M);
        check_against_oracle(d.instance, ReformKind::DI);
        check_against_oracle(d.instance, ReformKind::MM_DD_SP);
        BuildOptions full;
        full.reduce_support = false;
        check_against_oracle(d.instance, ReformKind::MM_M_Variation, full);
    }
}

TEST_CASE("moment builds with box support and second moments") {
    FacilityConfig c = small_config(5, false);
    c.box_support = true;
    check_against_oracle(gen_facility(c).instance, ReformKind::MM_M_Variation);
    c.box_support = false;
    c.moment_kind = MomentKind::FirstSecond;
    c.support_K = 160;
    const auto d = gen_facility(c);
    check_against_oracle(d.instance, ReformKind::MM_M_Variation);
    check_against_oracle(d.instance, ReformKind::SM_M);
}

TEST_CASE("literal per-point recourse copies agree with shared ones") {
    FacilityConfig c = small_config(3, false);
    c.I = 2;
    c.J = 2;
    c.support_K = 170;
    BuildOptions lit;
    lit.reduce_support = false;
    lit.share_recourse = false;
    const auto d = gen_facility(c);
    check_against_oracle(d.instance, ReformKind::MM_M_Variation, lit);
    const auto w = gen_facility(small_config(3, true));
    check_against_oracle(w.instance, ReformKind::MM_D_Variation_Obj, lit);
    check_against_oracle(w.instance, ReformKind::SM_D, lit);
    check_against_oracle(w.instance, ReformKind::DD_SAA, lit);
}

TEST_CASE("Wasserstein builds match the enumeration oracle") {
    for (std::uint64_t seed : {1, 2}) {
        const auto d = gen_facility(small_config(seed, true));
        for (auto k : {ReformKind::MM_D_Variation_Obj, ReformKind::SM_D, ReformKind::DI, ReformKind::DD_SAA,
                       ReformKind::MM_DD_SP})
            check_against_oracle(d.instance, k);
    }
    FacilityConfig c = small_config(4, true);
    c.norm = NormOrder::Inf;
    check_against_oracle(gen_facility(c).instance, ReformKind::MM_D_Variation_Obj);
}

TEST_CASE("chi-square builds export cones and solve by enumeration") {
    auto d = gen_facility(small_config(1, false));
    d.instance.distance = ModeDistance::ChiSquare;
    const BuiltModel b = build_chi2_moment(d.instance);
    CHECK(b.has_soc);
    CHECK(b.model.socs.size() == 3);
    const InstanceSolve r = solve_instance(d.instance, ReformKind::MM_M_Chi2);
    CHECK(r.via_enumeration);
    CHECK(r.report.objective == doctest::Approx(solve_by_enumeration(d.instance, ReformKind::MM_M_Chi2).objective));
    CHECK_THROWS_AS(build_variation_moment(d.instance), PreconditionViolated);
    const std::string text = write_lp_string(b.model);
    CHECK(read_lp_string(text).socs.size() == 3);
}

TEST_CASE("reductions at rho = 0") {
    for (bool w : {false, true}) {
        FacilityConfig c = small_config(7, w);
        c.rho = 0.0;
        auto d = gen_facility(c);
        const ReformKind mm = multimodal_kind(d.instance);
        const double v = milp_value(d.instance, mm);
        CHECK(same_value(v, milp_value(d.instance, ReformKind::MM_DD_SP)));
        d.instance.distance = ModeDistance::ChiSquare;
        CHECK(same_value(v, solve_instance(d.instance, multimodal_kind(d.instance)).report.objective));
        if (w) {
            c.radius = {0.0, 0.0, 0.0};
            const auto z = gen_facility(c);
            CHECK(same_value(milp_value(z.instance, ReformKind::MM_D_Variation_Obj),
                             milp_value(z.instance, ReformKind::DD_SAA)));
        }
    }
}

TEST_CASE("objective is nondecreasing in rho and in the moment half-width") {
    for (bool w : {false, true}) {
        double prev = -kInf;
        for (double rho : {0.0, 0.2, 0.4}) {
            FacilityConfig c = small_config(8, w);
            c.rho = rho;
            const double v = milp_value(gen_facility(c).instance, w ? ReformKind::MM_D_Variation_Obj
                                                                     : ReformKind::MM_M_Variation);
            CHECK(v >= prev - 1e-6 * (1.0 + std::abs(v)));
            prev = v;
        }
    }
    double prev = -kInf;
    for (double eps : {0.0, 0.1, 0.2}) {
        FacilityConfig c = small_config(8, false);
        c.eps_mu_rel = eps;
        const double v = milp_value(gen_facility(c).instance, ReformKind::MM_M_Variation);
        CHECK(v >= prev - 1e-6 * (1.0 + std::abs(v)));
        prev = v;
    }
}

TEST_CASE("single-modal baselines bound the multimodal value") {
    for (std::uint64_t seed : {11, 12, 13}) {
        const auto m = gen_facility(small_config(seed, false));
        CHECK(milp_value(m.instance, ReformKind::MM_M_Variation) <= milp_value(m.instance, ReformKind::SM_M) + 1e-6);
        const auto w = gen_facility(small_config(seed, true));
        CHECK(milp_value(w.instance, ReformKind::MM_D_Variation_Obj) <= milp_value(w.instance, ReformKind::SM_D) + 1e-6);
    }
}

TEST_CASE("decision-independent build equals the multimodal build on the frozen copy") {
    const auto d = gen_facility(small_config(9, false));
    CHECK(same_value(milp_value(d.instance, ReformKind::DI),
                     milp_value(decision_independent(d.instance), ReformKind::MM_M_Variation)));
}

TEST_CASE("empty moment sets are reported as unbounded") {
    FacilityConfig c = small_config(1, false);
    c.support_K = 100;
    c.eps_mu_rel = 0.0;
    const auto d = gen_facility(c);
    const InstanceSolve r = solve_instance(d.instance, ReformKind::MM_M_Variation);
    CHECK(r.report.status == Status::Unbounded);
    CHECK(solve_instance(d.instance, ReformKind::DI).report.status == Status::Optimal);
}

TEST_CASE("per-mode moment bounds must stay nonnegative for the pooled baseline") {
    FacilityConfig c = small_config(1, false);
    c.eps_mu_rel = 1.5;
    const auto d = gen_facility(c);
    CHECK_THROWS_AS(solve_instance(d.instance, ReformKind::SM_M), NegativeBoundViolation);
}

namespace {

// served amount x1 and shortfall x2 against demand xi, capacity 3 + 4 y0 + 2 y1;
// the demand row scales with 1 + 0.2 y0 so that T(y) xi(y) is quadratic in y
D3ROInstance capacity_instance(double radius, double rho) {
    D3ROInstance inst;
    inst.first.costs = Vec::Constant(2, 1.5);
    auto& s = inst.second;
    s.Q = Mat::Zero(2, 1);
    s.q = Vec::Zero(2);
    s.q << 1.0, 5.0;
    s.W = Mat::Zero(2, 2);
    s.W << 1, 1, -1, 0;
    Mat tc = Mat::Zero(2, 2);
    tc(0, 0) = -0.2;
    s.T = {AffineMap(Vec::Map(std::vector<double>{-1.0, 0.0}.data(), 2), tc)};
    Mat rc = Mat::Zero(2, 2);
    rc(1, 0) = -4.0;
    rc(1, 1) = -2.0;
    s.R = AffineMap(Vec::Map(std::vector<double>{0.0, -3.0}.data(), 2), rc);
    s.sense = {Sense::GreaterEqual, Sense::GreaterEqual};
    s.x_lower = Vec::Zero(2);
    for (int l = 0; l < 2; ++l) {
        WassersteinMode wm;
        for (int k = 0; k < 3; ++k) {
            Mat c(1, 2);
            c << 0.5 * (l + 1), -0.3 * k;
            wm.samples.push_back(AffineMap(Vec::Constant(1, 2.0 + 2.0 * k + l), c));
        }
        wm.radius = radius * (l + 1);
        wm.C = Mat::Zero(0, 1);
        wm.d = Vec::Zero(0);
        inst.modes.push_back(wm);
    }
    Mat sl(2, 2);
    sl << 0.1, -0.05, -0.1, 0.05;
    inst.mode_prob = AffineProb{Vec::Map(std::vector<double>{0.6, 0.4}.data(), 2), sl};
    inst.rho = rho;
    return inst;
}

}  // namespace

TEST_CASE("constraint uncertainty build matches the oracle") {
    for (double radius : {0.0, 0.4}) {
        for (double rho : {0.0, 0.3}) {
            D3ROInstance inst = capacity_instance(radius, rho);
            check_against_oracle(inst, ReformKind::MM_D_Variation_Constr);
            check_against_oracle(inst, ReformKind::MM_DD_SP);
            inst.distance = ModeDistance::ChiSquare;
            const BuiltModel b = build_constraint_uncertainty(inst, ModeDistance::ChiSquare);
            CHECK(b.has_soc);
            if (rho == 0.0)
                CHECK(same_value(solve_instance(inst, ReformKind::MM_D_Chi2_Constr).report.objective,
                                 milp_value(capacity_instance(radius, rho), ReformKind::MM_D_Variation_Constr)));
        }
    }
}

TEST_CASE("constraint uncertainty preconditions") {
    D3ROInstance inst = capacity_instance(0.2, 0.1);
    inst.second.q[0] = -1.0;
    inst.second.W(1, 0) = 0.0;
    CHECK_THROWS_AS(build_constraint_uncertainty(inst, ModeDistance::Variation), DualInfeasible);
    D3ROInstance q = capacity_instance(0.2, 0.1);
    q.second.Q(0, 0) = 1.0;
    CHECK_THROWS_AS(build_constraint_uncertainty(q, ModeDistance::Variation), PreconditionViolated);
    CHECK_THROWS_AS(build_variation_wasserstein_obj(capacity_instance(0.2, 0.1)), PreconditionViolated);
}

TEST_CASE("row count grows linearly in the sample count") {
    BuildOptions lit;
    lit.share_recourse = false;
    std::vector<int> rows;
    for (int k : {2, 4, 6}) {
        FacilityConfig c = small_config(2, true);
        c.samples = {k, k, k};
        rows.push_back(build_variation_wasserstein_obj(gen_facility(c).instance, lit).model.num_rows());
    }
    CHECK(rows[1] - rows[0] == rows[2] - rows[1]);
    CHECK(rows[1] > rows[0]);
}

TEST_CASE("shipment model with a continuous first stage solves as an LP") {
    const auto d = gen_shipment(ShipmentConfig{}, 3.0);
    const InstanceSolve r = solve_instance(d.instance, ReformKind::MM_M_Variation);
    REQUIRE(r.report.optimal());
    const double v = evaluate_inner(d.instance, ReformKind::MM_M_Variation, r.y).total;
    CHECK(r.report.objective == doctest::Approx(v).epsilon(1e-7));
    // no point of a coarse grid does better
    for (double a = 0.0; a <= 20.0; a += 2.5)
        for (double b = 0.0; b <= 20.0; b += 2.5) {
            Vec y = r.y;
            y[0] = a;
            y[1] = b;
            if (d.instance.first.admits(y))
                CHECK(evaluate_inner(d.instance, ReformKind::MM_M_Variation, y).total >= r.report.objective - 1e-6);
        }
}
