#include <cmath>
#include <random>

#include "doctest.h"
#include "d3ro/json_io.hpp"
#include "d3ro/lp.hpp"
#include "d3ro/model.hpp"

using namespace d3ro;

TEST_CASE("affine map evaluation") {
    AffineMap a(Vec::Map(std::vector<double>{1, 2}.data(), 2), Mat::Zero(2, 1));
    Vec y(1);
    y << 5;
    CHECK(evaluate_affine(a, y) == Vec::Map(std::vector<double>{1, 2}.data(), 2));

    Mat c(1, 2);
    c << 2, 3;
    AffineMap b(Vec::Zero(1), c);
    CHECK(b.eval(Vec::Ones(2))[0] == doctest::Approx(5.0));
    CHECK_THROWS_AS(b.eval(Vec::Ones(3)), DimensionMismatch);
}

TEST_CASE("demand mean with a nearby open facility") {
    const double lam = 0.5 * std::exp(-25.0 / 25.0);
    Mat c(1, 1);
    c << 60.0 * lam;
    AffineMap mu(Vec::Constant(1, 60.0), c);
    CHECK(mu.eval(Vec::Ones(1))[0] == doctest::Approx(60.0 * (1.0 + 0.5 * std::exp(-1.0))).epsilon(1e-12));
    CHECK(mu.eval(Vec::Ones(1))[0] == doctest::Approx(71.036).epsilon(1e-5));
}

TEST_CASE("affine map is linear in its coefficient part") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 50; ++t) {
        AffineMap a(Vec::NullaryExpr(3, [&] { return u(rng); }), Mat::NullaryExpr(3, 4, [&] { return u(rng); }));
        Vec y1 = Vec::NullaryExpr(4, [&] { return u(rng); }), y2 = Vec::NullaryExpr(4, [&] { return u(rng); });
        Vec lhs = a.eval(y1) + a.eval(y2) - a.eval(Vec::Zero(4));
        CHECK((lhs - a.eval(y1 + y2)).norm() < 1e-12);
    }
}

TEST_CASE("affine mode probabilities") {
    Mat s(3, 5);
    s.row(0).setConstant(0.01);
    s.row(1).setConstant(-0.01);
    s.row(2).setZero();
    AffineProb a{Vec::Map(std::vector<double>{0.5, 0.3, 0.2}.data(), 3), s};
    Vec p = mode_probabilities(a, Vec::Ones(5));
    CHECK(p[0] == doctest::Approx(0.55));
    CHECK(p[1] == doctest::Approx(0.25));
    CHECK(p[2] == doctest::Approx(0.20));
    for (int mask = 0; mask < 32; ++mask) {
        Vec y(5);
        for (int i = 0; i < 5; ++i) y[i] = (mask >> i) & 1;
        CHECK(std::abs(mode_probabilities(a, y).sum() - 1.0) < 1e-12);
    }
    AffineProb bad{a.base, s * 100.0};
    CHECK_THROWS_AS(mode_probabilities(bad, Vec::Ones(5)), SimplexViolation);
}

TEST_CASE("linear scaling mode probabilities") {
    LinearScalingProb m{Vec::Map(std::vector<double>{0.1, 0.9}.data(), 2), {0}, 0};
    Vec y(2);
    y << 2.79, 0.0;
    Vec p = mode_probabilities(m, y);
    CHECK(p[0] == doctest::Approx(0.279));
    CHECK(p[1] == doctest::Approx(0.721));
    y[0] = 11.0;
    CHECK_THROWS_AS(mode_probabilities(m, y), SimplexViolation);
}

TEST_CASE("interdiction probabilities") {
    InterdictionProb m = make_interdiction(Vec::Constant(1, 0.5), Vec::Constant(1, 0.9));
    Vec p = mode_probabilities(m, Vec::Ones(1));
    CHECK(m.states(0, 0) == 1);
    CHECK(p[0] == doctest::Approx(0.9));
    CHECK(p[1] == doctest::Approx(0.1));
    CHECK_THROWS_AS(mode_probabilities(m, Vec::Constant(1, 0.5)), PreconditionViolated);
}

TEST_CASE("interdiction probabilities sum to one for every binary y") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int I = 1; I <= 4; ++I) {
        Vec s0 = Vec::NullaryExpr(I, [&] { return u(rng); }), s1 = Vec::NullaryExpr(I, [&] { return u(rng); });
        InterdictionProb m = make_interdiction(s0, s1);
        CHECK(m.states.rows() == (1 << I));
        for (int mask = 0; mask < (1 << I); ++mask) {
            Vec y(I);
            for (int i = 0; i < I; ++i) y[i] = (mask >> i) & 1;
            CHECK(std::abs(mode_probabilities(m, y).sum() - 1.0) < 1e-12);
        }
    }
}

namespace {

// set the y and pi variables of the shaping rows to the closed form and measure violation
double shaping_violation(const InterdictionProb& m, const ModelIR& ir, const Vec& y) {
    const int I = static_cast<int>(y.size());
    const int L = static_cast<int>(m.states.rows());
    std::vector<double> x(ir.num_vars(), 0.0);
    for (int i = 0; i < I; ++i) x[i] = y[i];
    for (int l = 0; l < L; ++l) {
        for (int i = 0; i < I; ++i) {
            double prod = 1.0;
            for (int k = 0; k < I; ++k) {
                const double yk = k <= i ? y[k] : 0.0;
                const double surv = (1.0 - yk) * m.sigma0[k] + yk * m.sigma1[k];
                prod *= m.states(l, k) ? surv : 1.0 - surv;
            }
            x[I + l * I + i] = prod;
        }
    }
    return ir.max_violation(x);
}

}  // namespace

TEST_CASE("interdiction shaping rows") {
    InterdictionProb m = make_interdiction(Vec::Constant(1, 0.5), Vec::Constant(1, 0.9));
    ModelIR ir = interdiction_shaping_rows(m);
    CHECK(ir.num_rows() == 5);
    for (double y : {0.0, 1.0}) CHECK(shaping_violation(m, ir, Vec::Constant(1, y)) < 1e-12);

    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int I = 2; I <= 3; ++I) {
        InterdictionProb mi = make_interdiction(Vec::NullaryExpr(I, [&] { return u(rng); }),
                                                Vec::NullaryExpr(I, [&] { return u(rng); }));
        ModelIR r = interdiction_shaping_rows(mi);
        for (int mask = 0; mask < (1 << I); ++mask) {
            Vec y(I);
            for (int i = 0; i < I; ++i) y[i] = (mask >> i) & 1;
            CHECK(shaping_violation(mi, r, y) < 1e-12);
        }
    }
    CHECK_THROWS_AS(interdiction_shaping_rows(make_interdiction(Vec::Zero(1), Vec::Constant(1, 0.9))),
                    PreconditionViolated);
}

namespace {

D3ROInstance tiny_instance() {
    D3ROInstance inst;
    inst.first.costs = Vec::Constant(2, 1.0);
    inst.first.side.push_back({Vec::Ones(2), Sense::GreaterEqual, 1.0});
    auto& s = inst.second;
    s.Q = Mat::Zero(2, 1);
    s.Q(0, 0) = 2.0;
    s.Q(1, 0) = 5.0;
    s.q = Vec::Zero(2);
    s.W = Mat::Ones(1, 2);
    s.T = {AffineMap::fixed(Vec::Zero(1), 2)};
    s.R = AffineMap::fixed(Vec::Ones(1), 2);
    s.sense = {Sense::Equal};
    s.x_lower = Vec::Zero(2);
    MomentMode mm;
    mm.lower = AffineMap(Vec::Constant(1, 1.0), Mat::Constant(1, 2, 0.5));
    mm.upper = AffineMap(Vec::Constant(1, 2.0), Mat::Constant(1, 2, 0.5));
    mm.support = Support::grid_uniform(1, {0, 1, 2, 3, 4});
    WassersteinMode wm;
    wm.samples = {AffineMap::fixed(Vec::Constant(1, 1.5), 2), AffineMap(Vec::Constant(1, 2.5), Mat::Constant(1, 2, 0.1))};
    wm.radius = 0.3;
    wm.C.resize(2, 1);
    wm.C << 1, -1;
    wm.d.resize(2);
    wm.d << 4, 0;
    inst.modes = {mm, wm};
    Mat sl(2, 2);
    sl << 0.1, 0.0, -0.1, 0.0;
    inst.mode_prob = AffineProb{Vec::Constant(2, 0.5), sl};
    inst.rho = 0.2;
    inst.distance = ModeDistance::ChiSquare;
    return inst;
}

}  // namespace

TEST_CASE("instance json round trip") {
    D3ROInstance inst = tiny_instance();
    REQUIRE_NOTHROW(inst.validate());
    nlohmann::json j = instance_to_json(inst);
    D3ROInstance back = instance_from_json(j).instance;
    CHECK(instance_to_json(back) == j);
    CHECK(back.L() == 2);
    CHECK(back.distance == ModeDistance::ChiSquare);
    CHECK(back.second.sense[0] == Sense::Equal);
    const auto& w = std::get<WassersteinMode>(back.modes[1]);
    CHECK(w.samples[1].eval(Vec::Ones(2))[0] == doctest::Approx(2.7));
}

TEST_CASE("instance validation rejects broken data") {
    D3ROInstance inst = tiny_instance();
    inst.rho = -1.0;
    CHECK_THROWS_AS(inst.validate(), PreconditionViolated);
    inst = tiny_instance();
    std::get<WassersteinMode>(inst.modes[1]).d << -1, -1;
    CHECK_THROWS(inst.validate());
    inst = tiny_instance();
    inst.second.q = Vec::Zero(3);
    CHECK_THROWS_AS(inst.validate(), DimensionMismatch);
}
