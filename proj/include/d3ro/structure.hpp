#pragma once

#include <vector>

#include "d3ro/lp.hpp"
#include "d3ro/model.hpp"

namespace d3ro {

// A connected group of recourse variables (linked through shared rows of W)
// together with the single uncertain coordinate it sees, if any.
struct RecourseBlock {
    std::vector<int> xs;
    std::vector<int> rows;
    int coord = -1;            // -1: no uncertain coordinate enters the block
    bool homogeneous = false;  // zero q and zero T on the block: cost scales with xi_coord
};

struct RecourseStructure {
    std::vector<RecourseBlock> blocks;
    bool separable = true;                  // every block sees at most one coordinate
    std::vector<std::vector<int>> by_coord; // block ids per coordinate
    std::vector<int> constant_blocks;       // blocks with coord == -1

    // all blocks of coordinate n are homogeneous
    bool coord_homogeneous(int n) const;
};

RecourseStructure analyze_recourse(const SecondStageCore& core);

// h(y, xi) by one LP; status is Optimal, Infeasible or Unbounded
struct RecourseValue {
    Status status = Status::Optimal;
    double value = 0.0;
    std::vector<double> x;
};

RecourseValue second_stage_value(const SecondStageCore& core, const Vec& y, const Vec& xi);

// block part of h with only coordinate `value` of xi relevant (block.coord) or none
RecourseValue block_value(const SecondStageCore& core, const RecourseBlock& block, const Vec& y, double value);

// For homogeneous coordinate n: g_n(y) so that its blocks cost value * g_n(y) for value >= 0.
double unit_cost(const SecondStageCore& core, const RecourseStructure& st, int n, const Vec& y);

// Finite [lo, hi] bounds on each recourse variable over the recourse polyhedron with
// y relaxed to its box (and T = 0); infinite entries where the LP is unbounded.
void recourse_bounds(const SecondStageCore& core, const FirstStage& first, Vec& lo, Vec& hi);

}  // namespace d3ro
