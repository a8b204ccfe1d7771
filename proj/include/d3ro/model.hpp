#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "d3ro/errors.hpp"
#include "d3ro/model_ir.hpp"

namespace d3ro {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// constant + coefficients * y
struct AffineMap {
    Vec constant;
    Mat coef;  // out_dim x I

    AffineMap() = default;
    AffineMap(Vec c, Mat a);
    static AffineMap fixed(const Vec& c, int num_first_stage);

    int out_dim() const { return static_cast<int>(constant.size()); }
    int in_dim() const { return static_cast<int>(coef.cols()); }
    bool is_constant() const { return coef.size() == 0 || coef.isZero(0.0); }
    Vec eval(const Vec& y) const;
};

Vec evaluate_affine(const AffineMap& map, const Vec& y);

// h(y, xi) = min (Q xi + q)^T x  s.t.  T(y) xi + W x (sense) R(y),  x >= x_lower
struct SecondStageCore {
    Mat Q;                       // J x N
    Vec q;                       // J
    Mat W;                       // S x J
    std::vector<AffineMap> T;    // N column maps, each of output S
    AffineMap R;                 // S
    std::vector<Sense> sense;    // S; GreaterEqual or Equal
    Vec x_lower;                 // J; 0 or -inf

    int J() const { return static_cast<int>(q.size()); }
    int N() const { return static_cast<int>(Q.cols()); }
    int S() const { return static_cast<int>(W.rows()); }
    int I() const { return R.in_dim(); }

    Mat T_at(const Vec& y) const;
    Vec R_at(const Vec& y) const;
    bool T_is_zero() const;
    void validate(int num_first_stage) const;
};

struct AffineProb {
    Vec base;    // L
    Mat slopes;  // L x I
};

// p_l = base_l * y for l in scaled, remaining modes share 1 - y * sum(base_scaled)
struct LinearScalingProb {
    Vec base;
    std::vector<int> scaled;
    int var = 0;  // index of the scalar decision inside y
};

struct InterdictionProb {
    Vec sigma0;  // baseline survival, I
    Vec sigma1;  // reinforced survival, I
    Eigen::MatrixXi states;  // L x I, 1 = link survives
};

using ModeProbabilityModel = std::variant<AffineProb, LinearScalingProb, InterdictionProb>;

int num_modes(const ModeProbabilityModel& m);
Vec mode_probabilities(const ModeProbabilityModel& m, const Vec& y);
// all 2^I survival states in lexicographic order, state 0 = all links survive
InterdictionProb make_interdiction(const Vec& sigma0, const Vec& sigma1);
// linear rows over (y, pi) that the closed-form interdiction probabilities satisfy;
// variables are y_0..y_{I-1} followed by pi[l][i] for i = 1..I, row-major by l
ModelIR interdiction_shaping_rows(const InterdictionProb& m);

enum class MomentKind { First, FirstSecond };

struct Support {
    enum class Kind { Discrete, Grid, Box };
    Kind kind = Kind::Discrete;
    std::vector<Vec> points;                  // Discrete: joint support points
    std::vector<std::vector<double>> values;  // Grid: per-coordinate values (product set)
    Vec lower, upper;                         // Box

    static Support discrete(std::vector<Vec> pts);
    static Support grid(std::vector<std::vector<double>> vals);
    static Support grid_uniform(int N, const std::vector<double>& vals);
    static Support box(Vec lo, Vec hi);

    bool finite() const { return kind != Kind::Box; }
    // smallest / largest value of coordinate n over the support
    double coord_min(int n) const;
    double coord_max(int n) const;
};

struct MomentMode {
    MomentKind kind = MomentKind::First;
    AffineMap lower;  // M = N or 2N
    AffineMap upper;
    Support support;

    int M() const { return lower.out_dim(); }
};

// moment basis f(xi): xi, or [xi; xi^2]
Vec moment_basis(MomentKind kind, const Vec& xi);

struct MomentSpecialCase {
    Vec mu_bar, sigma_bar;        // N
    Vec eps_mu;                   // N, absolute half-width of the mean interval
    double eps_s_lo = 0.5, eps_s_hi = 2.0;
    Mat lambda_mu, lambda_s;      // N x I
    MomentKind kind = MomentKind::First;
};

MomentMode moment_from_special_case(const MomentSpecialCase& sc, Support support);

enum class NormOrder { One, Two, Inf };

struct WassersteinMode {
    std::vector<AffineMap> samples;  // K maps of output N
    double radius = 0.0;
    Mat C;  // H x N support polytope C xi <= d
    Vec d;
    NormOrder norm = NormOrder::One;

    int K() const { return static_cast<int>(samples.size()); }
};

using ModeAmbiguity = std::variant<MomentMode, WassersteinMode>;

enum class FirstStageKind { Binary, Box };
enum class ModeDistance { Variation, ChiSquare };

struct SideRow {
    Vec coef;
    Sense sense = Sense::LessEqual;
    double rhs = 0.0;
};

struct FirstStage {
    Vec costs;
    FirstStageKind kind = FirstStageKind::Binary;
    std::vector<SideRow> side;
    Vec lower, upper;  // Box only

    int I() const { return static_cast<int>(costs.size()); }
    bool admits(const Vec& y, double tol = 1e-9) const;
};

struct D3ROInstance {
    FirstStage first;
    SecondStageCore second;
    std::vector<ModeAmbiguity> modes;
    ModeProbabilityModel mode_prob;
    double rho = 0.0;
    ModeDistance distance = ModeDistance::Variation;

    int I() const { return first.I(); }
    int N() const { return second.N(); }
    int L() const { return static_cast<int>(modes.size()); }
    bool all_moment() const;
    bool all_wasserstein() const;
    void validate() const;
};

// per-mode data-generating law used for out-of-sample evaluation
struct GroundTruth {
    std::vector<AffineMap> mean;  // per mode, output N
    std::vector<Vec> sigma;       // per mode, N
    bool clamp_mean = false;      // mean := max(0, mean)
    bool clip_zero = true;        // realizations := max(0, realization)
    ModeProbabilityModel prob;
};

std::string to_string(ModeDistance d);
ModeDistance mode_distance_from_string(const std::string& s);

}  // namespace d3ro
