#include <cmath>
#include <sstream>

#include "doctest.h"
#include "d3ro/experiments.hpp"

using namespace d3ro;

namespace {

RunSpec small_sweep() {
    RunSpec s;
    s.I = 3;
    s.J = 6;
    s.kinds = {"MM_M_Variation", "SM_M"};
    s.rho = {0.0, 0.2};
    s.eps = {0.1};
    s.K = {200};
    s.replications = 2;
    s.oos_n = 200;
    return s;
}

}  // namespace

TEST_CASE("sweep covers the full grid in a fixed order, independent of threads") {
    RunSpec s = small_sweep();
    const auto a = run_sweep(s);
    REQUIRE(a.size() == 8);
    s.threads = 2;
    const auto b = run_sweep(s);
    REQUIRE(b.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].seed == b[i].seed);
        CHECK(a[i].kind == b[i].kind);
        CHECK(a[i].rho == b[i].rho);
        CHECK(a[i].solution == b[i].solution);
        CHECK(a[i].is_cost == b[i].is_cost);
        CHECK(a[i].oos_cost == b[i].oos_cost);
        CHECK(a[i].status == "Optimal");
    }
    CHECK(a[0].seed == 1);
    CHECK(a[4].seed == 2);
    CHECK(a[0].kind == "MM_M_Variation");
    CHECK(a[1].kind == "SM_M");
}

TEST_CASE("sweep CSV round trip and reduction") {
    const auto rows = run_sweep(small_sweep());
    std::stringstream ss;
    write_sweep_csv(ss, rows);
    CHECK(ss.str().rfind(kSweepHeader, 0) == 0);
    const auto back = read_sweep_csv(ss);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].is_cost == rows[i].is_cost);
        CHECK(back[i].oos_cost == rows[i].oos_cost);
        CHECK(back[i].solution == rows[i].solution);
    }
    const auto red = reduce_sweep(back);
    REQUIRE(red.size() == 4);
    for (const auto& r : red) {
        CHECK(r.total == 2);
        CHECK(r.count == 2);
        double is = 0.0;
        for (const auto& x : rows)
            if (x.kind == r.kind && x.rho == r.rho) is += x.is_cost / 2.0;
        CHECK(r.is_mean == doctest::Approx(is));
    }
}

TEST_CASE("reduction skips non-optimal rows") {
    std::vector<SweepRow> rows(2);
    rows[0].kind = rows[1].kind = "DI";
    rows[0].status = "Optimal";
    rows[0].is_cost = 4.0;
    rows[1].status = "Unbounded";
    rows[1].is_cost = -1e9;
    const auto red = reduce_sweep(rows);
    REQUIRE(red.size() == 1);
    CHECK(red[0].count == 1);
    CHECK(red[0].is_mean == 4.0);
    rows[0].status = "Infeasible";
    CHECK(std::isnan(reduce_sweep(rows)[0].is_mean));
}

TEST_CASE("run spec JSON round trip and validation") {
    RunSpec s = small_sweep();
    s.sizes = {{5, 10}};
    const RunSpec t = runspec_from_json(to_json(s));
    CHECK(to_json(t) == to_json(s));
    s.kinds = {"Bogus"};
    CHECK_THROWS(s.validate());
    s = small_sweep();
    s.fig2 = true;
    CHECK_THROWS_AS(s.validate(), PreconditionViolated);
}

TEST_CASE("compare keeps the multimodal value below the single-modal one") {
    RunSpec s = small_sweep();
    s.replications = 3;
    for (const auto& r : run_compare(s)) {
        CHECK(r.nesting_ok);
        CHECK(r.mm_is <= r.sm_is + 1e-6 * std::abs(r.sm_is));
    }
}

TEST_CASE("CSV numbers spell out non-finite values") {
    CHECK(csv_number(kInf) == "inf");
    CHECK(csv_number(-kInf) == "-inf");
    CHECK(csv_number(std::nan("")) == "nan");
    CHECK(std::stod(csv_number(0.1)) == 0.1);
}
