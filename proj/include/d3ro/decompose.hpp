#pragma once

#include <functional>
#include <vector>

#include "d3ro/lp.hpp"
#include "d3ro/model.hpp"
#include "d3ro/reformulate.hpp"

namespace d3ro {

// max over xi in the mode support and dual-feasible omega of R(y)^T omega - diff^T xi (T = 0)
struct Separation {
    double value = 0.0;
    Vec xi;
    Vec omega;
};

Separation separation(const SecondStageCore& core, const Support& support, const Vec& y, const Vec& diff);

// alpha_l >= R(y)^T omega - diff^T xi, kept with its generators
struct Cut {
    Vec xi;
    Vec omega;
};

struct CutPool {
    std::vector<std::vector<Cut>> per_mode;

    std::size_t size() const;
};

struct IterationLog {
    int iteration = 0;
    double lb = -kInf;
    double ub = kInf;
    int cuts_added = 0;
    double master_ms = 0.0;
};

struct DecompositionOptions {
    double gap_tol = 0.01;            // relative; 0 runs until no cut is violated
    double master_time_cap_s = 900.0;
    int max_iterations = 1000;
    BuildOptions build;
    SolverOptions solver;
    std::function<void(const IterationLog&)> on_iteration;
};

struct DecompositionResult {
    SolveReport report;  // objective is the final upper bound
    Vec y;
    double lb = -kInf;
    double ub = kInf;
    int iterations = 0;
    bool exact = false;  // stopped because no cut was violated
    CutPool pool;
    std::vector<IterationLog> log;
    double replay_violation = 0.0;  // largest violation of any pooled cut at the final master point
};

// cutting-plane method for variation-distance moment instances with binary y
DecompositionResult run_decomposition(const D3ROInstance& inst, const DecompositionOptions& opts = {});

}  // namespace d3ro
