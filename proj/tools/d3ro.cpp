// Command-line entry point: instance generation, single solves, and the batch experiments.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "d3ro/decompose.hpp"
#include "d3ro/experiments.hpp"
#include "d3ro/instances.hpp"
#include "d3ro/json_io.hpp"
#include "d3ro/oracle.hpp"
#include "d3ro/reformulate.hpp"

using namespace d3ro;
using nlohmann::json;

namespace {

json vec_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(csv_number(v)); }

Vec parse_y(const std::string& s, int I) {
    Vec y(I);
    if (static_cast<int>(s.size()) == I && s.find_first_not_of("01") == std::string::npos) {
        for (int i = 0; i < I; ++i) y[i] = s[i] == '1';
        return y;
    }
    std::stringstream ss(s);
    std::string f;
    int i = 0;
    while (std::getline(ss, f, ',')) {
        if (i >= I) break;
        y[i++] = std::stod(f);
    }
    if (i != I) throw std::runtime_error(fmt::format("--y needs {} entries", I));
    return y;
}

ReformKind kind_or_default(const std::string& k, const D3ROInstance& inst) {
    return k.empty() ? multimodal_kind(inst) : reform_kind_from_string(k);
}

// CSV to the output path (or stdout) plus a sidecar with the build string and the full run spec
template <class Writer>
void emit(const RunSpec& spec, Writer write) {
    if (spec.output.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream out(spec.output);
    if (!out) throw std::runtime_error("cannot write " + spec.output);
    write(out);
    std::ofstream meta(spec.output + ".meta.json");
    meta << json{{"git", git_describe()}, {"runspec", to_json(spec)}}.dump(1) << '\n';
}

struct BatchFlags {
    std::string config;
    RunSpec spec;
    std::vector<std::string> sizes;
};

void add_batch_flags(CLI::App* app, BatchFlags& f) {
    app->add_option("--config", f.config, "JSON run spec; flags given on the command line override it");
    app->add_option("--instance", f.spec.instance, "instance JSON instead of generated facility instances");
    app->add_flag("--fig2", f.spec.fig2, "use the fixed-coordinate sensitivity preset");
    app->add_option("--I", f.spec.I, "facilities");
    app->add_option("--J", f.spec.J, "customers");
    app->add_flag("--box", f.spec.box_support, "continuous box support instead of {1..K}");
    app->add_option("--ambiguity", f.spec.ambiguity, "family for DI and compare: moment | wasserstein");
    app->add_option("--kinds", f.spec.kinds, "model kinds")->delimiter(',');
    app->add_option("--rho", f.spec.rho, "mode-distance radii")->delimiter(',');
    app->add_option("--eps", f.spec.eps, "mean half-width fractions or Wasserstein radii")->delimiter(',');
    app->add_option("--K", f.spec.K, "support sizes")->delimiter(',');
    app->add_option("--reps", f.spec.replications, "replications");
    app->add_option("--seed", f.spec.base_seed, "base seed");
    app->add_option("--oos-n", f.spec.oos_n, "out-of-sample scenarios");
    app->add_option("--threads", f.spec.threads, "worker threads");
    app->add_option("-o,--output", f.spec.output, "CSV output path (stdout when empty)");
    app->add_option("--export-lp", f.spec.export_lp, "directory receiving every built model");
    app->add_option("--gap", f.spec.gap, "relative gap for the decomposition");
    app->add_option("--master-cap", f.spec.master_cap_s, "seconds per master solve");
    app->add_option("--monolithic-cap", f.spec.monolithic_cap_s, "seconds per monolithic solve");
    app->add_option("--sizes", f.sizes, "I x J pairs such as 5x10")->delimiter(',');
}

RunSpec resolve(const CLI::App* app, BatchFlags& f, const std::string& command) {
    RunSpec spec;
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) throw std::runtime_error("cannot read " + f.config);
        spec = runspec_from_json(json::parse(in));
    }
    auto given = [&](const char* name) { return app->count(name) > 0; };
    if (f.config.empty() || given("--instance")) spec.instance = f.spec.instance;
    if (f.config.empty() || given("--fig2")) spec.fig2 = f.spec.fig2;
    if (f.config.empty() || given("--I")) spec.I = f.spec.I;
    if (f.config.empty() || given("--J")) spec.J = f.spec.J;
    if (f.config.empty() || given("--box")) spec.box_support = f.spec.box_support;
    if (f.config.empty() || given("--ambiguity")) spec.ambiguity = f.spec.ambiguity;
    if (f.config.empty() || given("--kinds")) spec.kinds = f.spec.kinds;
    if (f.config.empty() || given("--rho")) spec.rho = f.spec.rho;
    if (f.config.empty() || given("--eps")) spec.eps = f.spec.eps;
    if (f.config.empty() || given("--K")) spec.K = f.spec.K;
    if (f.config.empty() || given("--reps")) spec.replications = f.spec.replications;
    if (f.config.empty() || given("--seed")) spec.base_seed = f.spec.base_seed;
    if (f.config.empty() || given("--oos-n")) spec.oos_n = f.spec.oos_n;
    if (f.config.empty() || given("--threads")) spec.threads = f.spec.threads;
    if (f.config.empty() || given("--output")) spec.output = f.spec.output;
    if (f.config.empty() || given("--export-lp")) spec.export_lp = f.spec.export_lp;
    if (f.config.empty() || given("--gap")) spec.gap = f.spec.gap;
    if (f.config.empty() || given("--master-cap")) spec.master_cap_s = f.spec.master_cap_s;
    if (f.config.empty() || given("--monolithic-cap")) spec.monolithic_cap_s = f.spec.monolithic_cap_s;
    if (given("--sizes")) {
        spec.sizes.clear();
        for (const auto& s : f.sizes) {
            const auto x = s.find('x');
            if (x == std::string::npos) throw std::runtime_error("size must look like 5x10: " + s);
            spec.sizes.emplace_back(std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1)));
        }
    }
    spec.command = command;
    spec.validate();
    if (!spec.export_lp.empty()) std::filesystem::create_directories(spec.export_lp);
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decision-dependent multimodal distributionally robust two-stage models"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a facility or shipment instance");
    std::string problem = "facility", gen_out;
    FacilityConfig fc;
    ShipmentConfig sc;
    double price = 2.8, eps = 0.0, radius = 0.0;
    std::string distance = "variation", moment = "first";
    gen->add_option("--problem", problem, "facility | shipment");
    gen->add_option("--I", fc.I);
    gen->add_option("--J", fc.J);
    gen->add_option("--seed", fc.seed);
    gen->add_flag("--fig2", fc.fig2);
    gen->add_flag("--wasserstein", fc.wasserstein, "sample-based modes instead of moment modes");
    gen->add_flag("--box", fc.box_support, "continuous box support [0, K]");
    gen->add_option("--eps", eps, "mean half-width fraction, or shipment mean half-width");
    gen->add_option("--radius", radius, "Wasserstein radius of every mode");
    gen->add_option("--rho", fc.rho, "mode-distance radius");
    gen->add_option("--K", fc.support_K, "support size");
    gen->add_option("--samples", fc.samples, "samples per mode")->delimiter(',');
    gen->add_option("--distance", distance, "variation | chi2");
    gen->add_option("--moments", moment, "first | second");
    gen->add_option("--price", price, "shipment price");
    gen->add_option("-o,--output", gen_out, "instance JSON path")->required();

    // solve / oracle
    auto* solve = app.add_subcommand("solve", "build and solve one instance");
    auto* oracle = app.add_subcommand("oracle", "solve one instance by enumerating y");
    std::string inst_path, kind_name, export_dir;
    bool literal = false;
    double big = 0.0;
    for (auto* c : {solve, oracle}) {
        c->add_option("--instance", inst_path, "instance JSON")->required();
        c->add_option("--kind", kind_name, "model kind (default: the instance's multimodal kind)");
    }
    solve->add_option("--export-lp", export_dir, "write the built model to this directory");
    solve->add_flag("--literal", literal, "one support row and recourse copy per support point");
    solve->add_option("--big", big, "initial multiplier cap (0: automatic)");

    // decompose
    auto* dec = app.add_subcommand("decompose", "cutting-plane method; streams one CSV row per iteration");
    double gap = 0.01, master_cap = 900.0;
    dec->add_option("--instance", inst_path, "instance JSON")->required();
    dec->add_option("--gap", gap, "relative gap (0: run until no cut is violated)");
    dec->add_option("--master-cap", master_cap, "seconds per master solve");

    // oos
    auto* oos = app.add_subcommand("oos", "out-of-sample cost of a first-stage decision");
    std::string y_text, shift = "none";
    double shift_value = 0.0;
    int oos_n = 1000;
    std::uint64_t oos_seed = 1;
    oos->add_option("--instance", inst_path, "instance JSON with ground truth")->required();
    oos->add_option("--y", y_text, "decision as a 0/1 string or comma list; solved with --kind when absent");
    oos->add_option("--kind", kind_name, "model kind used when --y is absent");
    oos->add_option("--n", oos_n, "scenarios");
    oos->add_option("--seed", oos_seed, "sampling seed");
    oos->add_option("--shift", shift, "none | skew | mean | mode");
    oos->add_option("--value", shift_value, "skew shape, mean offset, or moved mode mass");

    // shipment grid
    auto* ship = app.add_subcommand("shipment", "price search for the shipment planning model");
    double coarse = 0.1, fine = 0.01;
    ship->add_option("--kind", kind_name, "model kind")->default_str("MM_M_Variation");
    ship->add_option("--eps", sc.eps_mu, "mean half-width");
    ship->add_option("--rho", sc.rho, "mode-distance radius");
    ship->add_option("--coarse", coarse, "first grid step");
    ship->add_option("--fine", fine, "refinement step");

    // batch commands
    BatchFlags sweep_f, compare_f, bench_f;
    auto* sweep = app.add_subcommand("sweep", "one CSV row per replication, grid point and kind");
    add_batch_flags(sweep, sweep_f);
    auto* compare = app.add_subcommand("compare", "multimodal against single-modal value per instance");
    add_batch_flags(compare, compare_f);
    auto* bench = app.add_subcommand("bench_decompose", "decomposition against the monolithic model");
    add_batch_flags(bench, bench_f);
    auto* reduce = app.add_subcommand("reduce", "average a sweep CSV per kind and grid point");
    std::string reduce_in, reduce_out;
    reduce->add_option("--input", reduce_in, "sweep CSV")->required();
    reduce->add_option("-o,--output", reduce_out, "CSV output path (stdout when empty)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            FacilityData d;
            if (problem == "facility") {
                fc.eps_mu_rel = eps;
                fc.radius.assign(fc.p_bar.size(), radius);
                fc.support_hi = fc.support_K;
                fc.distance = mode_distance_from_string(distance);
                fc.moment_kind = moment == "second" ? MomentKind::FirstSecond : MomentKind::First;
                d = gen_facility(fc);
            } else if (problem == "shipment") {
                if (gen->count("--eps")) sc.eps_mu = eps;
                if (gen->count("--rho")) sc.rho = fc.rho;
                d = gen_shipment(sc, price);
            } else {
                throw std::runtime_error("unknown problem " + problem);
            }
            save_instance(gen_out, d.instance, &d.truth);
            return 0;
        }
        if (*solve || *oracle) {
            const InstanceBundle b = load_instance(inst_path);
            const ReformKind kind = kind_or_default(kind_name, b.instance);
            json out = {{"kind", to_string(kind)}};
            if (*oracle) {
                const SolveReport r = solve_by_enumeration(b.instance, kind);
                out["status"] = to_string(r.status);
                out["objective"] = number(r.objective);
                if (r.status == Status::Optimal) out["y"] = vec_json(Vec::Map(r.primal.data(), b.instance.I()));
                out["wall_ms"] = r.wall_ms;
            } else {
                SolveOptions so;
                so.build.big = big;
                so.build.reduce_support = so.build.share_recourse = !literal;
                if (!export_dir.empty()) {
                    std::filesystem::create_directories(export_dir);
                    export_model(build(b.instance, kind, so.build).model, export_dir + "/" + to_string(kind) + ".lp");
                }
                const InstanceSolve r = solve_instance(b.instance, kind, so);
                out["status"] = to_string(r.report.status);
                out["objective"] = number(r.report.objective);
                if (r.y.size() > 0) out["y"] = vec_json(r.y);
                out["big"] = r.big;
                out["escalations"] = r.escalations;
                out["cap_active"] = r.cap_active;
                out["via_enumeration"] = r.via_enumeration;
                out["nodes"] = r.report.nodes;
                out["wall_ms"] = r.report.wall_ms;
            }
            std::cout << out.dump(1) << '\n';
            return 0;
        }
        if (*dec) {
            const InstanceBundle b = load_instance(inst_path);
            DecompositionOptions o;
            o.gap_tol = gap;
            o.master_time_cap_s = master_cap;
            std::cout << "iteration,lb,ub,cuts_added,master_ms" << std::endl;
            o.on_iteration = [](const IterationLog& r) {
                std::cout << r.iteration << ',' << csv_number(r.lb) << ',' << csv_number(r.ub) << ',' << r.cuts_added
                          << ',' << fmt::format("{:.3f}", r.master_ms) << std::endl;
            };
            const DecompositionResult r = run_decomposition(b.instance, o);
            std::cerr << json{{"status", to_string(r.report.status)},
                              {"lb", number(r.lb)},
                              {"ub", number(r.ub)},
                              {"iterations", r.iterations},
                              {"exact", r.exact},
                              {"cuts", r.pool.size()},
                              {"y", vec_json(r.y)},
                              {"wall_ms", r.report.wall_ms}}
                             .dump()
                      << '\n';
            return 0;
        }
        if (*oos) {
            const InstanceBundle b = load_instance(inst_path);
            if (!b.ground_truth) throw std::runtime_error("instance has no ground_truth");
            Vec y;
            if (!y_text.empty()) {
                y = parse_y(y_text, b.instance.I());
            } else {
                const InstanceSolve r = solve_instance(b.instance, kind_or_default(kind_name, b.instance));
                if (r.report.status != Status::Optimal) throw std::runtime_error("solve ended " + to_string(r.report.status));
                y = r.y;
            }
            Shift s;
            if (shift == "skew") s.kind = ShiftKind::Skew;
            else if (shift == "mean") s.kind = ShiftKind::MeanShift;
            else if (shift == "mode") s.kind = ShiftKind::ModeDelta;
            else if (shift != "none") throw std::runtime_error("unknown shift " + shift);
            s.value = shift_value;
            const OosResult r = oos_evaluate(b.instance, *b.ground_truth, y, oos_n, oos_seed, s);
            std::cout << json{{"y", vec_json(y)}, {"oos_cost", r.cost}, {"first_stage", r.first_stage}, {"counts", r.counts}}.dump(1)
                      << '\n';
            return 0;
        }
        if (*ship) {
            const ShipmentSolve r =
                solve_shipment_grid(sc, reform_kind_from_string(kind_name.empty() ? "MM_M_Variation" : kind_name), coarse, fine);
            std::cout << json{{"price", r.price}, {"value", r.value}, {"plan", vec_json(r.plan)}, {"evaluations", r.evaluations}}
                             .dump(1)
                      << '\n';
            return 0;
        }
        if (*sweep) {
            const RunSpec spec = resolve(sweep, sweep_f, "sweep");
            const auto rows = run_sweep(spec);
            emit(spec, [&](std::ostream& os) { write_sweep_csv(os, rows); });
            return 0;
        }
        if (*compare) {
            const RunSpec spec = resolve(compare, compare_f, "compare");
            const auto rows = run_compare(spec);
            emit(spec, [&](std::ostream& os) { write_compare_csv(os, rows); });
            return 0;
        }
        if (*bench) {
            const RunSpec spec = resolve(bench, bench_f, "bench_decompose");
            const auto rows = run_bench_decompose(spec);
            emit(spec, [&](std::ostream& os) { write_bench_csv(os, rows); });
            return 0;
        }
        if (*reduce) {
            std::ifstream in(reduce_in);
            if (!in) throw std::runtime_error("cannot read " + reduce_in);
            const auto rows = reduce_sweep(read_sweep_csv(in));
            if (reduce_out.empty()) {
                write_reduce_csv(std::cout, rows);
            } else {
                std::ofstream out(reduce_out);
                write_reduce_csv(out, rows);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
