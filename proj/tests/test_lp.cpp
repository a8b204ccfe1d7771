#include <cmath>
#include <random>

#include "doctest.h"
#include "d3ro/lp.hpp"
#include "oracles.hpp"

using namespace d3ro;

TEST_CASE("single constraint lp has unit dual") {
    ModelIR m;
    const int x = m.add_var("x", -kInf, kInf);
    m.obj[x] = 1.0;
    m.add_row("c", {{x, 1.0}}, Sense::GreaterEqual, 1.0);
    auto r = solve_lp(m);
    REQUIRE(r.status == Status::Optimal);
    CHECK(r.objective == doctest::Approx(1.0));
    CHECK(r.duals[0] == doctest::Approx(1.0));
}

TEST_CASE("two variable vertex") {
    ModelIR m;
    const int x = m.add_var("x"), y = m.add_var("y");
    m.obj[x] = -1;
    m.obj[y] = -1;
    m.add_row("c", {{x, 1}, {y, 1}}, Sense::LessEqual, 1.0);
    auto r = solve_lp(m);
    REQUIRE(r.status == Status::Optimal);
    CHECK(r.objective == doctest::Approx(-1.0));
}

TEST_CASE("unbounded and infeasible are reported") {
    ModelIR m;
    const int x = m.add_var("x");
    m.obj[x] = -1;
    m.add_row("c", {{x, 1}}, Sense::GreaterEqual, 1.0);
    auto r = solve_lp(m);
    CHECK(r.status == Status::Unbounded);
    REQUIRE(r.ray.size() == 1);
    CHECK(r.ray[0] > 0);

    ModelIR f;
    const int a = f.add_var("a"), b = f.add_var("b");
    f.add_row("c1", {{a, 1}, {b, 1}}, Sense::LessEqual, 1.0);
    f.add_row("c2", {{a, 1}, {b, 1}}, Sense::GreaterEqual, 2.0);
    CHECK(solve_lp(f).status == Status::Infeasible);
}

TEST_CASE("equality rows and free variables") {
    ModelIR m;
    const int x = m.add_var("x", -kInf, kInf), y = m.add_var("y", -kInf, kInf);
    m.obj[x] = 1;
    m.obj[y] = 2;
    m.add_row("e", {{x, 1}, {y, -1}}, Sense::Equal, 3.0);
    m.add_row("g", {{y, 1}}, Sense::GreaterEqual, -1.0);
    auto r = solve_lp(m);
    REQUIRE(r.status == Status::Optimal);
    CHECK(r.objective == doctest::Approx(2.0 - 2.0));
    CHECK(r.primal[0] == doctest::Approx(2.0));
}

TEST_CASE("random lps match vertex enumeration") {
    std::mt19937_64 rng(7);
    int optimal = 0;
    for (int it = 0; it < 300; ++it) {
        ModelIR m = testing::random_lp(rng);
        auto ref = testing::vertex_enumeration(m);
        auto r = solve_lp(m);
        INFO("instance " << it);
        if (!ref.feasible) {
            CHECK(r.status == Status::Infeasible);
            continue;
        }
        REQUIRE(r.status == Status::Optimal);
        ++optimal;
        CHECK(r.objective == doctest::Approx(ref.value).epsilon(1e-7));
        CHECK(m.max_violation(r.primal) <= 1e-7);
        // weak duality with bounded-variable duals
        double dual = 0.0;
        for (int i = 0; i < m.num_rows(); ++i) dual += r.duals[i] * m.rows[i].rhs;
        for (int j = 0; j < m.num_vars(); ++j)
            dual += r.reduced[j] * (r.reduced[j] > 0 ? m.vars[j].lower : m.vars[j].upper);
        CHECK(dual == doctest::Approx(r.objective).epsilon(1e-6));
    }
    CHECK(optimal > 50);
}

TEST_CASE("knapsack branch and bound") {
    ModelIR m;
    const int a = m.add_binary("a"), b = m.add_binary("b");
    m.obj[a] = -3;
    m.obj[b] = -2;
    m.add_row("c", {{a, 1}, {b, 1}}, Sense::LessEqual, 1.0);
    auto r = solve_milp(m);
    REQUIRE(r.status == Status::Optimal);
    CHECK(r.objective == doctest::Approx(-3.0));
}

TEST_CASE("integral root needs one node") {
    ModelIR m;
    const int a = m.add_binary("a");
    m.obj[a] = 1;
    auto r = solve_milp(m);
    CHECK(r.status == Status::Optimal);
    CHECK(r.nodes == 1);
}

TEST_CASE("random milps match binary enumeration") {
    std::mt19937_64 rng(11);
    for (int it = 0; it < 200; ++it) {
        const int nb = 1 + static_cast<int>(rng() % 6);
        ModelIR m = testing::random_lp(rng, 6, 6, nb);
        auto ref = testing::binary_enumeration(m);
        auto r = solve_milp(m);
        INFO("instance " << it);
        if (!ref.feasible) {
            CHECK(r.status == Status::Infeasible);
            continue;
        }
        REQUIRE(r.status == Status::Optimal);
        CHECK(r.objective == doctest::Approx(ref.value).epsilon(1e-7));
        auto again = solve_milp(m);
        CHECK(again.objective == r.objective);
    }
}

TEST_CASE("lp text round trip") {
    ModelIR m;
    const int x = m.add_var("x[1]", -2, 4), y = m.add_binary("y");
    const int t = m.add_var("t", -kInf, kInf);
    m.obj[x] = 1.5;
    m.obj[y] = -2;
    m.obj[t] = 1;
    m.obj_constant = 3;
    m.add_row("r0", {{x, 1}, {y, 2}}, Sense::GreaterEqual, -1e-3);
    m.add_row("r1", {{x, 1}, {t, -1}}, Sense::LessEqual, 2.5e6);
    const std::string text = write_lp_string(m);
    CHECK(text.find("Binary") != std::string::npos);
    ModelIR back = read_lp_string(text);
    CHECK(back.num_vars() == 3);
    CHECK(back.num_rows() == 2);
    auto r1 = solve_milp(m), r2 = solve_milp(back);
    REQUIRE(r1.status == r2.status);
    CHECK(r1.objective == doctest::Approx(r2.objective));

    ModelIR empty;
    ModelIR e2 = read_lp_string(write_lp_string(empty));
    CHECK(e2.num_vars() == 0);

    ModelIR c;
    const int a = c.add_var("a"), b = c.add_var("b"), s = c.add_var("s");
    LinExpr ea, eb, es;
    ea.add(a, 1.0);
    eb.add(b, 2.0);
    es.add(s, 1.0);
    c.add_soc("cone", {ea, eb}, es);
    const std::string ct = write_lp_string(c);
    CHECK(ct.find("^2") != std::string::npos);
    CHECK(read_lp_string(ct).socs.size() == 1);
}
