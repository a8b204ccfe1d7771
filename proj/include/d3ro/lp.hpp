#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "d3ro/model_ir.hpp"

namespace d3ro {

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit, TimeLimit };

std::string to_string(Status s);

struct SolveReport {
    Status status = Status::IterationLimit;
    double objective = 0.0;
    double best_bound = -kInf;  // MILP only
    std::vector<double> primal;
    std::vector<double> duals;     // LP only, one per row
    std::vector<double> reduced;   // LP only, one per variable
    std::vector<double> ray;       // unbounded direction, if any
    long pivots = 0;
    long nodes = 0;
    double wall_ms = 0.0;

    bool optimal() const { return status == Status::Optimal; }
};

struct SolverOptions {
    long pivot_cap = -1;  // -1: D3RO_PIVOT_CAP or 1e6
    long node_cap = 100000;
    double time_limit_s = 1e30;
    double feas_tol = 1e-7;
    double opt_tol = 1e-6;
    double int_tol = 1e-6;
    // optional starting incumbent for branch and bound
    std::vector<double> incumbent;
};

long default_pivot_cap();

// Bounded-variable revised simplex over one model; keeps its basis between
// solves so bound changes re-optimize from the previous vertex.
class SimplexSolver {
public:
    SimplexSolver(const ModelIR& model, const SolverOptions& opts = {});
    ~SimplexSolver();
    SimplexSolver(const SimplexSolver&) = delete;
    SimplexSolver& operator=(const SimplexSolver&) = delete;

    void set_bounds(int var, double lower, double upper);
    double lower(int var) const;
    double upper(int var) const;
    void set_time_limit(double seconds);

    SolveReport solve();

    struct Basis {
        std::vector<int> basic;
        std::vector<std::uint8_t> status;
    };
    Basis basis() const;
    void set_basis(const Basis& b);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SolveReport solve_lp(const ModelIR& model, const SolverOptions& opts = {});
SolveReport solve_milp(const ModelIR& model, const SolverOptions& opts = {});

void export_model(const ModelIR& model, const std::string& path);
std::string write_lp_string(const ModelIR& model);
// reads the subset of the LP format produced by write_lp_string
ModelIR read_lp_string(const std::string& text);

}  // namespace d3ro
