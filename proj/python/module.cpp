// Python bindings: worst-mode solvers, facility generation, solves and out-of-sample evaluation.
// Instances cross the boundary as JSON text in the CLI file format.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "d3ro/instances.hpp"
#include "d3ro/json_io.hpp"
#include "d3ro/oracle.hpp"
#include "d3ro/reformulate.hpp"

namespace py = pybind11;
using namespace d3ro;
using nlohmann::json;

namespace {

InstanceBundle parse(const std::string& text) { return instance_from_json(json::parse(text)); }

py::dict report_dict(const SolveReport& r, const Vec& y) {
    py::dict d;
    d["status"] = to_string(r.status);
    d["objective"] = r.objective;
    d["y"] = y;
    d["wall_ms"] = r.wall_ms;
    return d;
}

ShiftKind shift_from_string(const std::string& s) {
    if (s == "none") return ShiftKind::None;
    if (s == "skew") return ShiftKind::Skew;
    if (s == "mean") return ShiftKind::MeanShift;
    if (s == "mode") return ShiftKind::ModeDelta;
    throw py::value_error("shift must be none, skew, mean or mode");
}

}  // namespace

PYBIND11_MODULE(d3ro, m) {
    m.doc() = "Distributionally robust two-stage models with decision-dependent multimodal ambiguity";

    py::register_exception<PreconditionViolated>(m, "PreconditionViolated", PyExc_ValueError);

    m.def(
        "worst_mode_variation",
        [](const Vec& psi, const Vec& p_hat, double rho) {
            const ModeWorst w = worst_mode_variation(psi, p_hat, rho);
            return py::make_tuple(w.value, w.p);
        },
        py::arg("psi"), py::arg("p_hat"), py::arg("rho"),
        "Worst mode distribution over the variation ball; returns (value, p).");

    m.def(
        "worst_mode_chi2",
        [](const Vec& psi, const Vec& p_hat, double rho) {
            const ModeWorst w = worst_mode_chi2(psi, p_hat, rho);
            return py::make_tuple(w.value, w.p);
        },
        py::arg("psi"), py::arg("p_hat"), py::arg("rho"),
        "Worst mode distribution over the chi-square ball; returns (value, p).");

    m.def(
        "gen_facility",
        [](std::uint64_t seed, bool fig2, int I, int J, bool wasserstein, double eps_mu_rel, int support_K,
           bool box_support, double radius, double rho, const std::string& distance) {
            FacilityConfig c;
            c.seed = seed;
            c.fig2 = fig2;
            c.I = I;
            c.J = J;
            c.wasserstein = wasserstein;
            c.eps_mu_rel = eps_mu_rel;
            c.support_K = support_K;
            c.box_support = box_support;
            c.radius = {radius, radius, radius};
            c.rho = rho;
            c.distance = mode_distance_from_string(distance);
            const FacilityData d = gen_facility(c);
            return instance_to_json(d.instance, &d.truth).dump();
        },
        py::arg("seed") = 1, py::arg("fig2") = false, py::arg("I") = 5, py::arg("J") = 10, py::arg("wasserstein") = false,
        py::arg("eps_mu_rel") = 0.1, py::arg("support_K") = 200, py::arg("box_support") = false, py::arg("radius") = 0.0,
        py::arg("rho") = 0.2, py::arg("distance") = "variation",
        "Facility-location instance as JSON text, ground truth included.");

    m.def(
        "solve",
        [](const std::string& instance, const std::string& kind) {
            const InstanceBundle b = parse(instance);
            const ReformKind k = kind.empty() ? multimodal_kind(b.instance) : reform_kind_from_string(kind);
            py::gil_scoped_release release;
            const InstanceSolve s = solve_instance(b.instance, k);
            py::gil_scoped_acquire acquire;
            return report_dict(s.report, s.y);
        },
        py::arg("instance"), py::arg("kind") = "",
        "Solve an instance with the named reformulation (default: the multimodal model of its family).");

    m.def(
        "solve_by_enumeration",
        [](const std::string& instance, const std::string& kind) {
            const InstanceBundle b = parse(instance);
            const ReformKind k = kind.empty() ? multimodal_kind(b.instance) : reform_kind_from_string(kind);
            const SolveReport r = solve_by_enumeration(b.instance, k);
            const Vec y = r.primal.empty() ? Vec() : Vec::Map(r.primal.data(), static_cast<int>(r.primal.size()));
            return report_dict(r, y);
        },
        py::arg("instance"), py::arg("kind") = "", "Global minimum over binary first-stage decisions.");

    m.def(
        "evaluate_inner",
        [](const std::string& instance, const std::string& kind, const Vec& y) {
            const InstanceBundle b = parse(instance);
            const ReformKind k = kind.empty() ? multimodal_kind(b.instance) : reform_kind_from_string(kind);
            const InnerReport r = evaluate_inner(b.instance, k, y);
            py::dict d;
            d["psi"] = r.psi;
            d["p_hat"] = r.p_hat;
            d["p_star"] = r.p_star;
            d["first_stage_cost"] = r.first_stage_cost;
            d["worst"] = r.worst;
            d["total"] = r.total;
            d["unbounded"] = r.unbounded;
            return d;
        },
        py::arg("instance"), py::arg("kind"), py::arg("y"), "Worst-case cost of a fixed first-stage decision.");

    m.def(
        "oos_evaluate",
        [](const std::string& instance, const Vec& y, int n, std::uint64_t seed, const std::string& shift, double value) {
            const InstanceBundle b = parse(instance);
            if (!b.ground_truth) throw py::value_error("instance carries no ground truth");
            return oos_evaluate(b.instance, *b.ground_truth, y, n, seed, {shift_from_string(shift), value}).cost;
        },
        py::arg("instance"), py::arg("y"), py::arg("n") = 1000, py::arg("seed") = 7, py::arg("shift") = "none",
        py::arg("value") = 0.0, "Out-of-sample cost of y under the generating distribution.");
}
