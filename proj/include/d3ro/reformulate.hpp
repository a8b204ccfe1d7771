#pragma once

#include <array>
#include <utility>
#include <vector>

#include "d3ro/lp.hpp"
#include "d3ro/model.hpp"
#include "d3ro/oracle.hpp"

namespace d3ro {

struct BuildOptions {
    double big = 0.0;            // cap on dual multipliers; 0 picks default_big(inst)
    bool reduce_support = true;  // drop support rows implied by the two extreme values (first moments, linear cost)
    bool share_recourse = true;  // one recourse copy per coordinate when the cost scales with xi
    bool cut_master = false;     // box moment supports get a free alpha and no support rows (cuts added later)
};

// variables of one moment block built with cut_master
struct MomentSlot {
    int mode = 0;
    int alpha = -1;
    std::vector<int> multipliers;  // every beta variable of the block
    std::vector<LinExpr> diff;     // upper minus lower multiplier, per moment coordinate
};

struct BuiltModel {
    ModelIR model;
    ReformKind kind = ReformKind::MM_M_Variation;
    std::vector<int> y;                           // first-stage variable indices
    std::vector<std::pair<int, double>> capped;   // variables bounded by the artificial cap, with their cap
    double big = 0.0;
    bool has_soc = false;                         // export only; solved by enumeration
    std::vector<MomentSlot> slots;                // cut_master only
};

double default_big(const D3ROInstance& inst);

BuiltModel build(const D3ROInstance& inst, ReformKind kind, const BuildOptions& opts = {});
BuiltModel build_variation_moment(const D3ROInstance& inst, const BuildOptions& opts = {});
BuiltModel build_chi2_moment(const D3ROInstance& inst, const BuildOptions& opts = {});
BuiltModel build_variation_wasserstein_obj(const D3ROInstance& inst, const BuildOptions& opts = {});
BuiltModel build_chi2_wasserstein_obj(const D3ROInstance& inst, const BuildOptions& opts = {});
BuiltModel build_constraint_uncertainty(const D3ROInstance& inst, ModeDistance distance, const BuildOptions& opts = {});
BuiltModel build_single_modal_baseline(const D3ROInstance& inst, ReformKind kind, const BuildOptions& opts = {});

// rows forcing z = x * y for binary y and x in [lo, hi]; returns the row indices
std::array<int, 4> mccormick_block(ModelIR& m, int z, int x, int y, double lo, double hi);

struct SolveOptions {
    BuildOptions build;
    SolverOptions solver;
    EnumerationOptions enumeration;
    int max_escalations = 4;
};

struct InstanceSolve {
    SolveReport report;      // objective and status of the instance; primal is the full model vector
    Vec y;
    double big = 0.0;
    int escalations = 0;
    bool via_enumeration = false;
    bool cap_active = false;  // an artificial cap still binds after all escalations
};

// MILP for linear kinds (with cap audit and a fixed-y polish LP), enumeration for chi-square kinds
InstanceSolve solve_instance(const D3ROInstance& inst, ReformKind kind, const SolveOptions& opts = {});

// objective of the built model with y fixed, by one LP
SolveReport solve_fixed_y(const BuiltModel& built, const Vec& y, const SolverOptions& opts = {});

}  // namespace d3ro
