#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "d3ro/decompose.hpp"
#include "d3ro/instances.hpp"
#include "d3ro/oracle.hpp"

namespace d3ro {

// one batch job; the JSON config file mirrors these fields
struct RunSpec {
    std::string command = "sweep";
    std::string instance;  // JSON instance file; empty: generate facility instances
    bool fig2 = false;
    int I = 5;
    int J = 10;
    bool box_support = false;
    std::string ambiguity = "moment";  // family of DI rows and of compare: moment | wasserstein
    std::vector<std::string> kinds = {"MM_M_Variation", "SM_M", "DI"};
    std::vector<double> rho = {0.2};
    std::vector<double> eps = {0.1};  // mean half-width fraction (moment) or radius (Wasserstein)
    std::vector<int> K = {200};       // support values {1..K} or box [0, K]
    int replications = 1;
    std::uint64_t base_seed = 1;
    int oos_n = 1000;
    int threads = 1;
    std::string output;
    std::string export_lp;  // directory receiving every built model
    double gap = 0.0;
    double master_cap_s = 900.0;
    double monolithic_cap_s = 3600.0;
    std::vector<std::pair<int, int>> sizes = {{5, 10}, {10, 20}};

    void validate() const;
};

nlohmann::json to_json(const RunSpec& s);
RunSpec runspec_from_json(const nlohmann::json& j);

std::string git_describe();

// generated instance for one sweep cell
FacilityData make_instance(const RunSpec& spec, ReformKind kind, std::uint64_t seed, double rho, double eps, int K);

struct SweepRow {
    std::uint64_t seed = 0;
    std::string kind;
    double rho = 0.0, eps = 0.0;
    int K = 0;
    std::string solution;  // 0/1 string for binary y, else values joined by ';'
    double is_cost = 0.0;
    double oos_cost = 0.0;
    double wall_ms = 0.0;
    std::string status;
};

inline constexpr const char* kSweepHeader = "seed,kind,rho,eps,K,solution,is_cost,oos_cost,wall_ms,status";

// rows ordered by (replication, rho, eps, K, kind) whatever the thread count
std::vector<SweepRow> run_sweep(const RunSpec& spec);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(std::istream& is);

struct ReduceRow {
    std::string kind;
    double rho = 0.0, eps = 0.0;
    int K = 0;
    int count = 0;  // rows with an optimal status
    int total = 0;
    double is_mean = 0.0, oos_mean = 0.0;
};

inline constexpr const char* kReduceHeader = "kind,rho,eps,K,optimal,rows,is_mean,oos_mean";

std::vector<ReduceRow> reduce_sweep(const std::vector<SweepRow>& rows);
void write_reduce_csv(std::ostream& os, const std::vector<ReduceRow>& rows);

struct CompareRow {
    std::uint64_t seed = 0;
    std::string family;  // moment | wasserstein
    double mm_is = 0.0, sm_is = 0.0, mm_oos = 0.0, sm_oos = 0.0;
    bool nesting_ok = false;
    std::string status;
};

inline constexpr const char* kCompareHeader = "seed,family,mm_is,sm_is,mm_oos,sm_oos,nesting_ok,status";

std::vector<CompareRow> run_compare(const RunSpec& spec);
void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows);

struct BenchRow {
    int I = 0, J = 0;
    std::uint64_t seed = 0;
    std::string method;  // decomposition | monolithic-K200 | monolithic-compact
    double wall_ms = 0.0;
    double lb = 0.0, ub = 0.0;
    int iterations = 0;
    double oos = 0.0;
    std::string status;
};

inline constexpr const char* kBenchHeader = "I,J,seed,method,wall_ms,LB,UB,iterations,oos,status";

// first seed at or after base whose mean bounds stay inside the support box for every y
std::uint64_t bounded_seed(FacilityConfig cfg, std::uint64_t base);

std::vector<BenchRow> run_bench_decompose(const RunSpec& spec);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

// CSV field: shortest round-trip decimal, nan/inf spelled out
std::string csv_number(double v);

}  // namespace d3ro
