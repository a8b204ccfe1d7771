#pragma once

#include <string>
#include <vector>

#include "d3ro/lp.hpp"
#include "d3ro/model.hpp"
#include "d3ro/structure.hpp"

namespace d3ro {

enum class ReformKind {
    MM_M_Variation,
    MM_M_Chi2,
    MM_D_Variation_Obj,
    MM_D_Chi2_Obj,
    MM_D_Variation_Constr,
    MM_D_Chi2_Constr,
    SM_M,
    SM_D,
    DI,
    DD_SAA,
    MM_DD_SP,
};

std::string to_string(ReformKind k);
ReformKind reform_kind_from_string(const std::string& s);
bool is_chi2(ReformKind k);
// the multimodal kind matching the instance's modes and mode distance
ReformKind multimodal_kind(const D3ROInstance& inst);
// copy with every decision-dependent ambiguity datum frozen at y = 0
D3ROInstance decision_independent(const D3ROInstance& inst);

// Second-stage costs at a fixed y, reusing per-coordinate block solves.
class ScenarioCost {
public:
    ScenarioCost(const SecondStageCore& core, const RecourseStructure& st, const Vec& y);
    double operator()(const Vec& xi);
    // contribution of coordinate n's blocks at xi_n = v (separable cores only)
    double coord(int n, double v);
    double constant();
    bool separable() const { return st_.separable; }

private:
    const SecondStageCore& core_;
    const RecourseStructure& st_;
    Vec y_;
    std::vector<double> unit_;
    std::vector<bool> unit_done_;
    std::vector<std::vector<std::pair<double, double>>> cache_;
    double const_ = 0.0;
    bool const_done_ = false;
};

struct ModeWorst {
    Vec p;
    double value = 0.0;
};

// max sum p psi over the variation ball ||p - p_hat||_1 <= rho in the simplex;
// entries of psi may be -inf (empty mode sets)
ModeWorst worst_mode_variation(const Vec& psi, const Vec& p_hat, double rho);
// max sum p psi over the chi-square ball sum (p - p_hat)^2 / p <= rho, through its dual
ModeWorst worst_mode_chi2(const Vec& psi, const Vec& p_hat, double rho);

// sup of E h(y, xi) over the moment set; -inf when the set is empty at y
double psi_moment(const SecondStageCore& core, const MomentMode& mode, const Vec& y);
double psi_moment(ScenarioCost& cost, const SecondStageCore& core, const MomentMode& mode, const Vec& y);

// weighted empirical distribution at y: points and weights summing to one
struct Empirical {
    std::vector<Vec> points;
    std::vector<double> weights;
};
Empirical empirical_at(const WassersteinMode& mode, const Vec& y);

// Wasserstein worst case with T = 0 over the support polytope (C, d):
// closed form for linear-in-xi costs on a box with the 1-norm, else the fixed-y dual LP
double psi_wasserstein(const SecondStageCore& core, const Empirical& emp, double radius, const Mat& C,
                       const Vec& d, NormOrder norm, const Vec& y);
double psi_wasserstein(const SecondStageCore& core, const WassersteinMode& mode, const Vec& y);
// always the fixed-y dual LP
double psi_wasserstein_lp(const SecondStageCore& core, const Empirical& emp, double radius, const Mat& C,
                          const Vec& d, NormOrder norm, const Vec& y);

// Q = 0, unbounded support, 1-norm: empirical mean plus radius times the Lipschitz constant of h
double psi_constraint(const SecondStageCore& core, const WassersteinMode& mode, const Vec& y);
double lipschitz_constant(const SecondStageCore& core, const Vec& y);
// ω >= 0 (free on equality rows) with W^T ω = q (<= q on sign-constrained x) is non-empty
bool recourse_dual_feasible(const SecondStageCore& core);

double psi_saa(const SecondStageCore& core, const Empirical& emp, const Vec& y);

// all points of a grid support in lexicographic order; GuardExceeded past `cap`
std::vector<Vec> grid_points(const Support& s, std::size_t cap);
// union of mode supports for the pooled moment baseline
Support pooled_support(const std::vector<const Support*>& supports, int N);
// largest distance between two points of the box C xi <= d in the given norm
double support_diameter(const Mat& C, const Vec& d, int N, NormOrder norm);
// per-coordinate bounds when every row of C involves a single coordinate
bool support_box(const Mat& C, const Vec& d, int N, Vec& lo, Vec& hi);

struct InnerReport {
    Vec psi;
    Vec p_hat;
    Vec p_star;
    double first_stage_cost = 0.0;
    double worst = 0.0;  // worst-case expected recourse cost
    double total = 0.0;
    bool unbounded = false;  // ambiguity emptiness drives the outer objective to -inf
};

InnerReport evaluate_inner(const D3ROInstance& inst, ReformKind kind, const Vec& y);

struct EnumerationOptions {
    int threads = 1;
    int max_binaries = 20;
};

// global minimum over binary y admitted by the side rows; primal holds y
SolveReport solve_by_enumeration(const D3ROInstance& inst, ReformKind kind, const EnumerationOptions& opts = {});

// y for candidate index `mask` in lexicographic order (y_0 most significant)
Vec binary_point(long mask, int I);

}  // namespace d3ro
