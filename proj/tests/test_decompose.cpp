#include <cmath>

#include "doctest.h"
#include "d3ro/decompose.hpp"
#include "d3ro/instances.hpp"
#include "d3ro/oracle.hpp"

using namespace d3ro;

namespace {

FacilityConfig box_config(std::uint64_t seed, int I = 3, int J = 6) {
    FacilityConfig c;
    c.I = I;
    c.J = J;
    c.seed = seed;
    c.box_support = true;
    c.eps_mu_rel = 0.1;
    c.rho = 0.2;
    return c;
}

// h = min 2 x1 + 3 x2 s.t. x1 + x2 = 1 + y, x >= 0; xi does not enter
SecondStageCore flat_core() {
    SecondStageCore core;
    core.Q = Mat::Zero(2, 2);
    core.q = Vec(2);
    core.q << 2.0, 3.0;
    core.W = Mat::Ones(1, 2);
    core.sense = {Sense::Equal};
    core.x_lower = Vec::Zero(2);
    core.R = AffineMap(Vec::Ones(1), Mat::Ones(1, 1));
    core.T = {AffineMap::fixed(Vec::Zero(1), 1), AffineMap::fixed(Vec::Zero(1), 1)};
    return core;
}

}  // namespace

TEST_CASE("separation with equal multipliers reduces to the recourse dual") {
    const SecondStageCore core = flat_core();
    const Support box = Support::box(Vec::Zero(2), Vec::Constant(2, 5.0));
    const Separation s = separation(core, box, Vec::Ones(1), Vec::Zero(2));
    CHECK(s.value == doctest::Approx(4.0));
    CHECK(s.omega[0] == doctest::Approx(2.0));
}

TEST_CASE("separation over a box picks the vertex by coefficient signs") {
    const SecondStageCore core = flat_core();
    const Support box = Support::box(Vec::Constant(2, 1.0), Vec::Constant(2, 5.0));
    Vec diff(2);
    diff << 0.5, -2.0;
    const Separation s = separation(core, box, Vec::Zero(1), diff);
    CHECK(s.xi[0] == doctest::Approx(1.0));
    CHECK(s.xi[1] == doctest::Approx(5.0));
    CHECK(s.value == doctest::Approx(2.0 - 0.5 + 10.0));
}

TEST_CASE("separation agrees with the recourse value at every box vertex") {
    const auto d = gen_facility(box_config(4, 2, 3));
    const auto& inst = d.instance;
    const Support& sup = std::get<MomentMode>(inst.modes[0]).support;
    const int N = inst.N();
    Vec y(2);
    y << 1, 0;
    Vec diff(N);
    diff << 3.0, -7.0, 12.0;
    // h is linear in xi here, so the maximum of h - diff^T xi sits at a vertex
    double best = -kInf;
    for (int mask = 0; mask < (1 << N); ++mask) {
        Vec xi(N);
        for (int n = 0; n < N; ++n) xi[n] = (mask >> n) & 1 ? sup.upper[n] : sup.lower[n];
        const RecourseValue h = second_stage_value(inst.second, y, xi);
        REQUIRE(h.status == Status::Optimal);
        best = std::max(best, h.value - diff.dot(xi));
    }
    const Separation s = separation(inst.second, sup, y, diff);
    CHECK(s.value == doctest::Approx(best).epsilon(1e-9));

    std::vector<Vec> pts = {Vec::Constant(N, 10.0), Vec::Constant(N, 80.0), Vec::Constant(N, 150.0)};
    double dbest = -kInf;
    for (const auto& xi : pts) dbest = std::max(dbest, second_stage_value(inst.second, y, xi).value - diff.dot(xi));
    CHECK(separation(inst.second, Support::discrete(pts), y, diff).value == doctest::Approx(dbest).epsilon(1e-9));
}

TEST_CASE("decomposition reaches the enumeration optimum with monotone bounds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = gen_facility(box_config(seed));
        DecompositionOptions o;
        o.gap_tol = 0.0;
        const DecompositionResult r = run_decomposition(d.instance, o);
        const SolveReport e = solve_by_enumeration(d.instance, ReformKind::MM_M_Variation);
        INFO("seed " << seed);
        REQUIRE(r.report.status == Status::Optimal);
        CHECK(r.exact);
        CHECK(r.ub == doctest::Approx(e.objective).epsilon(1e-9));
        CHECK(r.lb == doctest::Approx(r.ub).epsilon(1e-9));
        for (int i = 0; i < d.instance.I(); ++i) CHECK(r.y[i] == e.primal[i]);
        CHECK(r.replay_violation <= 1e-7 * (1.0 + std::abs(r.ub)));
        CHECK(r.iterations < 1000);
        for (std::size_t t = 1; t < r.log.size(); ++t) {
            CHECK(r.log[t].lb >= r.log[t - 1].lb);
            CHECK(r.log[t].ub <= r.log[t - 1].ub);
        }
        CHECK(r.log.back().cuts_added == 0);
    }
}

TEST_CASE("decomposition stops at the requested gap") {
    const auto d = gen_facility(box_config(2, 4, 8));
    DecompositionOptions o;
    o.gap_tol = 0.05;
    const DecompositionResult r = run_decomposition(d.instance, o);
    REQUIRE(r.report.status == Status::Optimal);
    CHECK(r.ub - r.lb <= 0.05 * std::abs(r.ub) + 1e-9);
    const SolveReport e = solve_by_enumeration(d.instance, ReformKind::MM_M_Variation);
    CHECK(r.lb <= e.objective + 1e-6 * (1.0 + std::abs(e.objective)));
    CHECK(r.ub >= e.objective - 1e-6 * (1.0 + std::abs(e.objective)));
}

TEST_CASE("decomposition preconditions") {
    FacilityConfig c = box_config(1);
    c.wasserstein = true;
    c.samples = {3, 3, 3};
    CHECK_THROWS_AS(run_decomposition(gen_facility(c).instance), PreconditionViolated);
    FacilityConfig g = box_config(1);
    g.box_support = false;
    CHECK_THROWS_AS(run_decomposition(gen_facility(g).instance), PreconditionViolated);
    FacilityConfig s = box_config(1);
    s.moment_kind = MomentKind::FirstSecond;
    CHECK_THROWS_AS(run_decomposition(gen_facility(s).instance), PreconditionViolated);
}
