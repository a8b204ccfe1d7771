#include <cmath>
#include <random>

#include "doctest.h"
#include "d3ro/instances.hpp"
#include "d3ro/oracle.hpp"
#include "d3ro/reformulate.hpp"
#include "d3ro/structure.hpp"

using namespace d3ro;

namespace {

// one mode, no noise
FacilityConfig single_mode(std::uint64_t seed) {
    FacilityConfig c;
    c.I = 3;
    c.J = 4;
    c.seed = seed;
    c.mu_ratio = {1.0};
    c.strength = {0.5};
    c.p_bar = {1.0};
    c.p_slope = {0.0};
    c.sigma_rel = 0.0;
    return c;
}

}  // namespace

TEST_CASE("fig2 preset coordinates") {
    FacilityConfig c;
    c.fig2 = true;
    const auto d = gen_facility(c);
    Mat want(5, 2);
    want << 33, 52, 10, 72, 90, 5, 7, 18, 24, 87;
    CHECK(d.facilities == want);
    CHECK(d.customers.rows() == 10);
    c.I = 4;
    CHECK_THROWS_AS(gen_facility(c), PreconditionViolated);
}

TEST_CASE("facility generation is deterministic and within the declared ranges") {
    FacilityConfig c;
    c.seed = 12;
    const auto a = gen_facility(c), b = gen_facility(c);
    CHECK(a.instance.first.costs == b.instance.first.costs);
    CHECK(a.instance.second.Q == b.instance.second.Q);
    CHECK(a.truth.mean[0].constant == b.truth.mean[0].constant);
    const int I = c.I, J = c.J;
    for (int i = 0; i < I; ++i) {
        CHECK(a.instance.first.costs[i] >= 1000.0);
        CHECK(a.instance.first.costs[i] <= 3000.0);
    }
    for (int j = 0; j < J; ++j) {
        const double dist = (a.facilities.row(0) - a.customers.row(j)).norm();
        const double r = dist - a.instance.second.Q(j, j);
        CHECK(r >= 50.0);
        CHECK(r <= 100.0);
        CHECK(a.instance.second.Q(I * J + j, j) == 30.0);
        const double mu = a.truth.mean[0].constant[j];
        CHECK(mu >= 50.0);
        CHECK(mu <= 100.0);
        CHECK(a.truth.mean[1].constant[j] == doctest::Approx(0.25 * mu));
        CHECK(a.truth.mean[2].constant[j] == doctest::Approx(0.5 * mu));
    }
    for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j) {
            CHECK(a.facilities(i, 0) >= 0.0);
            CHECK(a.facilities(i, 1) <= 100.0);
        }
    a.instance.validate();
    FacilityConfig w = c;
    w.wasserstein = true;
    gen_facility(w).instance.validate();
}

TEST_CASE("mode-one mean with every facility open") {
    FacilityConfig c;
    c.seed = 5;
    const auto d = gen_facility(c);
    const Vec mean = d.truth.mean[0].eval(Vec::Ones(c.I));
    for (int j = 0; j < c.J; ++j) {
        double s = 0.0;
        for (int i = 0; i < c.I; ++i) s += std::exp(-(d.facilities.row(i) - d.customers.row(j)).norm() / 25.0);
        CHECK(mean[j] == doctest::Approx(d.truth.mean[0].constant[j] * (1.0 + 0.5 * s)).epsilon(1e-12));
    }
}

TEST_CASE("shipment probabilities and demands") {
    const Vec p = shipment_probabilities(2.79);
    CHECK(p[0] == doctest::Approx(0.279));
    CHECK(p[1] == doctest::Approx(0.721));
    const Vec z = shipment_probabilities(0.0);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == doctest::Approx(1.0));
    const auto d = gen_shipment(ShipmentConfig{}, 5.0);
    CHECK(d.truth.mean[0].eval(Vec::Zero(2))[0] == doctest::Approx(5.0));
    CHECK(d.truth.mean[1].eval(Vec::Zero(2))[0] == 0.0);
    d.instance.validate();
}

TEST_CASE("scenario counts use the largest remainder") {
    Vec p(3);
    p << 0.5, 0.3, 0.2;
    const auto c = scenario_counts(p, 7);
    CHECK(c == std::vector<int>{4, 2, 1});
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        Vec q(4);
        for (int l = 0; l < 4; ++l) q[l] = u(rng);
        q /= q.sum();
        const int n = 1 + t * 7;
        int s = 0;
        for (int v : scenario_counts(q, n)) s += v;
        CHECK(s == n);
    }
}

TEST_CASE("out-of-sample cost without noise is one recourse value") {
    const auto d = gen_facility(single_mode(2));
    Vec y(3);
    y << 1, 0, 1;
    const OosResult r = oos_evaluate(d.instance, d.truth, y, 50, 9);
    const RecourseValue h = second_stage_value(d.instance.second, y, d.truth.mean[0].eval(y));
    REQUIRE(h.status == Status::Optimal);
    CHECK(r.cost == doctest::Approx(d.instance.first.costs.dot(y) + h.value).epsilon(1e-12));
    CHECK(r.counts == std::vector<int>{50});
}

TEST_CASE("out-of-sample cost converges to the expected cost") {
    FacilityConfig c;
    c.seed = 8;
    const auto d = gen_facility(c);
    const Vec y = Vec::Ones(c.I);
    const Vec p = mode_probabilities(d.truth.prob, y);
    double expected = d.instance.first.costs.dot(y);
    // the recourse is linear in demand here, so the expected cost is the cost at the mean
    for (int l = 0; l < 3; ++l) expected += p[l] * second_stage_value(d.instance.second, y, d.truth.mean[l].eval(y)).value;
    const OosResult r = oos_evaluate(d.instance, d.truth, y, 100000, 1);
    CHECK(std::abs(r.cost - expected) <= 0.02 * std::abs(expected));
    const OosResult again = oos_evaluate(d.instance, d.truth, y, 100000, 1);
    CHECK(again.cost == r.cost);
}

TEST_CASE("out-of-sample shifts move the cost in the expected direction") {
    FacilityConfig c;
    c.fig2 = true;
    const auto d = gen_facility(c);
    const Vec y = Vec::Ones(5);
    const double base = oos_evaluate(d.instance, d.truth, y, 1000, 4).cost;
    // mode one carries the largest demand and every open facility earns on it
    CHECK(oos_evaluate(d.instance, d.truth, y, 1000, 4, {ShiftKind::ModeDelta, 0.1}).cost < base);
    CHECK(oos_evaluate(d.instance, d.truth, y, 1000, 4, {ShiftKind::MeanShift, 10.0}).cost < base);
    const double skew = oos_evaluate(d.instance, d.truth, y, 1000, 4, {ShiftKind::Skew, 10.0}).cost;
    CHECK(std::abs(skew - base) <= 0.05 * std::abs(base));
}

TEST_CASE("shipment grid search") {
    ShipmentConfig cfg;
    const ShipmentSolve z = solve_shipment_grid(cfg, ReformKind::MM_M_Variation, 0.1, 0.01, 0.0);
    CHECK(z.price == 0.0);
    CHECK(z.value == doctest::Approx(solve_instance(gen_shipment(cfg, 0.0).instance, ReformKind::MM_M_Variation).report.objective));

    const ShipmentSolve two = solve_shipment_grid(cfg, ReformKind::MM_M_Variation);
    double best = kInf;
    for (int k = 0; k <= 1000; ++k) {
        const double v = solve_instance(gen_shipment(cfg, k * 0.01).instance, ReformKind::MM_M_Variation).report.objective;
        best = std::min(best, v);
    }
    CHECK(two.value == doctest::Approx(best).epsilon(1e-12));
    const ShipmentSolve sm = solve_shipment_grid(cfg, ReformKind::SM_M);
    // the pooled baseline hedges against the low-demand mode with a higher price
    CHECK(sm.price > two.price);
    CHECK(sm.value >= two.value);
    CHECK_THROWS_AS(solve_shipment_grid(cfg, ReformKind::MM_M_Variation, 0.0), PreconditionViolated);
}
