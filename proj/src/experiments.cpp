#include "d3ro/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "d3ro/json_io.hpp"
#include "d3ro/reformulate.hpp"

#ifndef D3RO_GIT_DESCRIBE
#define D3RO_GIT_DESCRIBE "unknown"
#endif

namespace d3ro {

using nlohmann::json;

namespace {

// runs fn(0..n-1) on a small pool; results are written by index so order never depends on timing
template <class Fn>
void parallel_for(int n, int threads, Fn fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

double since_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

bool wasserstein_kind(ReformKind k) {
    switch (k) {
        case ReformKind::MM_D_Variation_Obj:
        case ReformKind::MM_D_Chi2_Obj:
        case ReformKind::MM_D_Variation_Constr:
        case ReformKind::MM_D_Chi2_Constr:
        case ReformKind::SM_D:
        case ReformKind::DD_SAA:
        case ReformKind::MM_DD_SP:
            return true;
        default:
            return false;
    }
}

std::string solution_string(const D3ROInstance& inst, const Vec& y) {
    std::string s;
    if (inst.first.kind == FirstStageKind::Binary) {
        for (int i = 0; i < y.size(); ++i) s += y[i] > 0.5 ? '1' : '0';
        return s;
    }
    for (int i = 0; i < y.size(); ++i) s += (i ? ";" : "") + fmt::format("{}", y[i]);
    return s;
}

std::string clean(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

double parse_number(const std::string& s) {
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::nan("");
    return std::stod(s);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct Solved {
    std::string status;
    double value = 0.0;
    Vec y;
    bool optimal = false;
};

Solved solve_cell(const D3ROInstance& inst, ReformKind kind) {
    Solved s;
    try {
        const InstanceSolve r = solve_instance(inst, kind);
        s.status = to_string(r.report.status);
        if (r.cap_active) s.status += ";cap";
        s.value = r.report.objective;
        s.y = r.y;
        s.optimal = r.report.status == Status::Optimal;
    } catch (const std::exception& e) {
        s.status = clean(e.what());
        s.value = std::nan("");
    }
    return s;
}

double oos_cost(const FacilityData& d, bool have_truth, const Solved& s, int n, std::uint64_t seed) {
    if (!have_truth || !s.optimal) return std::nan("");
    return oos_evaluate(d.instance, d.truth, s.y, n, seed).cost;
}

}  // namespace

void RunSpec::validate() const {
    if (kinds.empty() || rho.empty() || eps.empty() || K.empty()) throw PreconditionViolated("run spec: grids must be non-empty");
    if (replications < 1) throw PreconditionViolated("run spec: replications must be at least 1");
    for (const auto& k : kinds) reform_kind_from_string(k);
    if (ambiguity != "moment" && ambiguity != "wasserstein")
        throw PreconditionViolated("run spec: ambiguity is moment or wasserstein");
    if (fig2 && (I != 5 || J != 10)) throw PreconditionViolated("run spec: fig2 preset has I=5 and J=10");
}

json to_json(const RunSpec& s) {
    json sizes = json::array();
    for (const auto& [i, j] : s.sizes) sizes.push_back({i, j});
    return {{"command", s.command},
            {"instance", s.instance},
            {"fig2", s.fig2},
            {"I", s.I},
            {"J", s.J},
            {"box_support", s.box_support},
            {"ambiguity", s.ambiguity},
            {"kinds", s.kinds},
            {"rho", s.rho},
            {"eps", s.eps},
            {"K", s.K},
            {"replications", s.replications},
            {"base_seed", s.base_seed},
            {"oos_n", s.oos_n},
            {"threads", s.threads},
            {"output", s.output},
            {"export_lp", s.export_lp},
            {"gap", s.gap},
            {"master_cap_s", s.master_cap_s},
            {"monolithic_cap_s", s.monolithic_cap_s},
            {"sizes", sizes}};
}

RunSpec runspec_from_json(const json& j) {
    RunSpec s;
    s.command = j.value("command", s.command);
    s.instance = j.value("instance", s.instance);
    s.fig2 = j.value("fig2", s.fig2);
    s.I = j.value("I", s.I);
    s.J = j.value("J", s.J);
    s.box_support = j.value("box_support", s.box_support);
    s.ambiguity = j.value("ambiguity", s.ambiguity);
    s.kinds = j.value("kinds", s.kinds);
    s.rho = j.value("rho", s.rho);
    s.eps = j.value("eps", s.eps);
    s.K = j.value("K", s.K);
    s.replications = j.value("replications", s.replications);
    s.base_seed = j.value("base_seed", s.base_seed);
    s.oos_n = j.value("oos_n", s.oos_n);
    s.threads = j.value("threads", s.threads);
    s.output = j.value("output", s.output);
    s.export_lp = j.value("export_lp", s.export_lp);
    s.gap = j.value("gap", s.gap);
    s.master_cap_s = j.value("master_cap_s", s.master_cap_s);
    s.monolithic_cap_s = j.value("monolithic_cap_s", s.monolithic_cap_s);
    if (j.contains("sizes")) {
        s.sizes.clear();
        for (const auto& p : j.at("sizes")) s.sizes.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
    s.validate();
    return s;
}

std::string git_describe() { return D3RO_GIT_DESCRIBE; }

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{}", v);
}

FacilityData make_instance(const RunSpec& spec, ReformKind kind, std::uint64_t seed, double rho, double eps, int K) {
    if (!spec.instance.empty()) {
        InstanceBundle b = load_instance(spec.instance);
        FacilityData d;
        d.instance = std::move(b.instance);
        d.instance.rho = rho;
        if (b.ground_truth) d.truth = std::move(*b.ground_truth);
        return d;
    }
    FacilityConfig c;
    c.I = spec.I;
    c.J = spec.J;
    c.fig2 = spec.fig2;
    c.seed = seed;
    c.rho = rho;
    c.box_support = spec.box_support;
    const bool w = kind == ReformKind::DI ? spec.ambiguity == "wasserstein" : wasserstein_kind(kind);
    c.wasserstein = w;
    if (w) {
        c.radius = {eps, eps, eps};
        c.support_hi = K;
    } else {
        c.eps_mu_rel = eps;
        c.support_K = K;
    }
    if (is_chi2(kind)) c.distance = ModeDistance::ChiSquare;
    return gen_facility(c);
}

std::vector<SweepRow> run_sweep(const RunSpec& spec) {
    spec.validate();
    std::vector<SweepRow> rows;
    for (int r = 0; r < spec.replications; ++r)
        for (double rho : spec.rho)
            for (double eps : spec.eps)
                for (int K : spec.K)
                    for (const auto& k : spec.kinds) {
                        SweepRow row;
                        row.seed = spec.base_seed + r;
                        row.kind = k;
                        row.rho = rho;
                        row.eps = eps;
                        row.K = K;
                        rows.push_back(row);
                    }
    parallel_for(static_cast<int>(rows.size()), spec.threads, [&](int i) {
        SweepRow& row = rows[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const ReformKind kind = reform_kind_from_string(row.kind);
            const FacilityData d = make_instance(spec, kind, row.seed, row.rho, row.eps, row.K);
            if (!spec.export_lp.empty())
                export_model(build(d.instance, kind).model,
                             fmt::format("{}/{}_{}_{}_{}_{}.lp", spec.export_lp, row.seed, row.kind, row.rho, row.eps, row.K));
            const Solved s = solve_cell(d.instance, kind);
            row.status = s.status;
            row.is_cost = s.value;
            if (s.y.size() > 0) row.solution = solution_string(d.instance, s.y);
            row.oos_cost = oos_cost(d, !d.truth.mean.empty(), s, spec.oos_n, row.seed);
        } catch (const std::exception& e) {
            row.status = clean(e.what());
            row.is_cost = row.oos_cost = std::nan("");
        }
        row.wall_ms = since_ms(t0);
    });
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << kSweepHeader << '\n';
    for (const auto& r : rows)
        os << r.seed << ',' << r.kind << ',' << csv_number(r.rho) << ',' << csv_number(r.eps) << ',' << r.K << ','
           << r.solution << ',' << csv_number(r.is_cost) << ',' << csv_number(r.oos_cost) << ','
           << fmt::format("{:.3f}", r.wall_ms) << ',' << r.status << '\n';
}

std::vector<SweepRow> read_sweep_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kSweepHeader) throw D3ROError("not a sweep CSV (header mismatch)");
    std::vector<SweepRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != 10) throw D3ROError("sweep CSV: wrong field count in: " + line);
        SweepRow r;
        r.seed = std::stoull(f[0]);
        r.kind = f[1];
        r.rho = parse_number(f[2]);
        r.eps = parse_number(f[3]);
        r.K = std::stoi(f[4]);
        r.solution = f[5];
        r.is_cost = parse_number(f[6]);
        r.oos_cost = parse_number(f[7]);
        r.wall_ms = parse_number(f[8]);
        r.status = f[9];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ReduceRow> reduce_sweep(const std::vector<SweepRow>& rows) {
    std::map<std::tuple<std::string, double, double, int>, ReduceRow> acc;
    for (const auto& r : rows) {
        ReduceRow& a = acc[{r.kind, r.rho, r.eps, r.K}];
        a.kind = r.kind;
        a.rho = r.rho;
        a.eps = r.eps;
        a.K = r.K;
        ++a.total;
        if (r.status != "Optimal") continue;
        ++a.count;
        a.is_mean += r.is_cost;
        a.oos_mean += r.oos_cost;
    }
    std::vector<ReduceRow> out;
    for (auto& [key, a] : acc) {
        if (a.count > 0) {
            a.is_mean /= a.count;
            a.oos_mean /= a.count;
        } else {
            a.is_mean = a.oos_mean = std::nan("");
        }
        out.push_back(a);
    }
    return out;
}

void write_reduce_csv(std::ostream& os, const std::vector<ReduceRow>& rows) {
    os << kReduceHeader << '\n';
    for (const auto& r : rows)
        os << r.kind << ',' << csv_number(r.rho) << ',' << csv_number(r.eps) << ',' << r.K << ',' << r.count << ','
           << r.total << ',' << csv_number(r.is_mean) << ',' << csv_number(r.oos_mean) << '\n';
}

std::vector<CompareRow> run_compare(const RunSpec& spec) {
    spec.validate();
    const bool w = spec.ambiguity == "wasserstein";
    const ReformKind mm = w ? ReformKind::MM_D_Variation_Obj : ReformKind::MM_M_Variation;
    const ReformKind sm = w ? ReformKind::SM_D : ReformKind::SM_M;
    std::vector<CompareRow> rows(spec.replications);
    parallel_for(spec.replications, spec.threads, [&](int r) {
        CompareRow& row = rows[r];
        row.seed = spec.base_seed + r;
        row.family = spec.ambiguity;
        row.mm_is = row.sm_is = row.mm_oos = row.sm_oos = std::nan("");
        try {
            const FacilityData d = make_instance(spec, mm, row.seed, spec.rho.front(), spec.eps.front(), spec.K.front());
            const bool truth = !d.truth.mean.empty();
            const Solved a = solve_cell(d.instance, mm);
            const Solved b = solve_cell(d.instance, sm);
            row.mm_is = a.value;
            row.sm_is = b.value;
            row.mm_oos = oos_cost(d, truth, a, spec.oos_n, row.seed);
            row.sm_oos = oos_cost(d, truth, b, spec.oos_n, row.seed);
            row.nesting_ok = a.optimal && b.optimal && a.value <= b.value + 1e-6 * (1.0 + std::abs(b.value));
            row.status = a.status == b.status ? a.status : a.status + "/" + b.status;
        } catch (const std::exception& e) {
            row.status = clean(e.what());
        }
    });
    return rows;
}

void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows) {
    os << kCompareHeader << '\n';
    for (const auto& r : rows)
        os << r.seed << ',' << r.family << ',' << csv_number(r.mm_is) << ',' << csv_number(r.sm_is) << ','
           << csv_number(r.mm_oos) << ',' << csv_number(r.sm_oos) << ',' << (r.nesting_ok ? 1 : 0) << ',' << r.status
           << '\n';
}

std::uint64_t bounded_seed(FacilityConfig cfg, std::uint64_t base) {
    for (std::uint64_t seed = base; seed < base + 1000; ++seed) {
        cfg.seed = seed;
        const FacilityData d = gen_facility(cfg);
        bool ok = true;
        for (const auto& mode : d.instance.modes) {
            const auto& m = std::get<MomentMode>(mode);
            for (int n = 0; n < m.M() && ok; ++n) {
                // largest lower bound and smallest upper bound over binary y
                const double lo_max = m.lower.constant[n] + m.lower.coef.row(n).cwiseMax(0.0).sum();
                const double hi_min = m.upper.constant[n] + m.upper.coef.row(n).cwiseMin(0.0).sum();
                ok = lo_max <= m.support.coord_max(n) && hi_min >= m.support.coord_min(n);
            }
        }
        if (ok) return seed;
    }
    throw D3ROError("no seed with bounded moment sets in 1000 tries");
}

std::vector<BenchRow> run_bench_decompose(const RunSpec& spec) {
    spec.validate();
    std::vector<BenchRow> rows;
    for (const auto& [I, J] : spec.sizes) {
        FacilityConfig cfg;
        cfg.I = I;
        cfg.J = J;
        cfg.box_support = true;
        cfg.support_K = spec.K.front();
        cfg.eps_mu_rel = spec.eps.front();
        cfg.rho = spec.rho.front();
        const std::uint64_t seed = bounded_seed(cfg, spec.base_seed);
        cfg.seed = seed;
        const FacilityData box = gen_facility(cfg);
        FacilityConfig gcfg = cfg;
        gcfg.box_support = false;
        const FacilityData grid = gen_facility(gcfg);

        auto oos_of = [&](const Vec& y) {
            return y.size() == I ? oos_evaluate(box.instance, box.truth, y, spec.oos_n, seed).cost : std::nan("");
        };

        BenchRow dec;
        dec.I = I;
        dec.J = J;
        dec.seed = seed;
        dec.method = "decomposition";
        try {
            DecompositionOptions o;
            o.gap_tol = spec.gap;
            o.master_time_cap_s = spec.master_cap_s;
            const auto t0 = std::chrono::steady_clock::now();
            const DecompositionResult r = run_decomposition(box.instance, o);
            dec.wall_ms = since_ms(t0);
            dec.lb = r.lb;
            dec.ub = r.ub;
            dec.iterations = r.iterations;
            dec.oos = oos_of(r.y);
            dec.status = to_string(r.report.status);
        } catch (const std::exception& e) {
            dec.status = clean(e.what());
        }
        rows.push_back(dec);

        for (const bool literal : {true, false}) {
            BenchRow m;
            m.I = I;
            m.J = J;
            m.seed = seed;
            m.method = literal ? "monolithic-K200" : "monolithic-compact";
            try {
                SolveOptions so;
                so.build.reduce_support = !literal;
                so.build.share_recourse = !literal;
                so.solver.time_limit_s = spec.monolithic_cap_s;
                const InstanceSolve r = solve_instance(grid.instance, ReformKind::MM_M_Variation, so);
                m.wall_ms = r.report.wall_ms;
                m.lb = r.report.best_bound;
                m.ub = r.report.objective;
                m.oos = r.report.status == Status::Optimal ? oos_of(r.y) : std::nan("");
                m.status = to_string(r.report.status);
            } catch (const std::exception& e) {
                m.status = clean(e.what());
            }
            rows.push_back(m);
        }
    }
    return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << kBenchHeader << '\n';
    for (const auto& r : rows)
        os << r.I << ',' << r.J << ',' << r.seed << ',' << r.method << ',' << fmt::format("{:.3f}", r.wall_ms) << ','
           << csv_number(r.lb) << ',' << csv_number(r.ub) << ',' << r.iterations << ',' << csv_number(r.oos) << ','
           << r.status << '\n';
}

}  // namespace d3ro
