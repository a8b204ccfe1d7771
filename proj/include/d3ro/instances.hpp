#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "d3ro/model.hpp"
#include "d3ro/oracle.hpp"

namespace d3ro {

struct FacilityConfig {
    int I = 5;
    int J = 10;
    std::uint64_t seed = 1;
    bool fig2 = false;              // fixed coordinates of the sensitivity-study instance (I=5, J=10)
    bool wasserstein = false;       // moment modes otherwise
    double grid = 100.0;
    double f_lo = 1000.0, f_hi = 3000.0;
    double r_lo = 50.0, r_hi = 100.0;
    double penalty = 30.0;
    double mu_lo = 50.0, mu_hi = 100.0;
    std::vector<double> mu_ratio = {1.0, 0.25, 0.5};
    std::vector<double> strength = {0.5, 0.1, 0.0};
    double decay = 25.0;
    double sigma_rel = 0.1;
    std::vector<double> p_bar = {0.5, 0.3, 0.2};
    std::vector<double> p_slope = {0.01, -0.01, 0.0};
    // moment modes
    MomentKind moment_kind = MomentKind::First;
    double eps_mu_rel = 0.0;        // half-width of the mean interval as a fraction of the nominal mean
    int support_K = 200;            // per-coordinate values {1..K}
    bool box_support = false;       // continuous support [0, K] per coordinate instead
    // Wasserstein modes
    std::vector<int> samples = {50, 30, 20};
    std::vector<double> radius = {0.0, 0.0, 0.0};
    double support_hi = 200.0;
    NormOrder norm = NormOrder::One;
    double rho = 0.0;
    ModeDistance distance = ModeDistance::Variation;
};

struct FacilityData {
    D3ROInstance instance;
    GroundTruth truth;
    Mat facilities;  // I x 2
    Mat customers;   // J x 2
};

FacilityData gen_facility(const FacilityConfig& cfg);
// coordinates of the sensitivity-study instance
Mat fig2_facilities();
Mat fig2_customers();

struct ShipmentConfig {
    double P1 = 0.01, P2 = 0.02, c = 0.01;
    double eps_mu = 0.1;
    double rho = 0.2;
    double sigma = 1.0;
    double production_cap = 20.0;  // upper bound on each planned production amount
    int support_max = 10;          // support {0..support_max}
};

// the shipment model with the price fixed: first stage is the production plan (box, continuous)
FacilityData gen_shipment(const ShipmentConfig& cfg, double price);
Vec shipment_probabilities(double price);

struct ShipmentSolve {
    double price = 0.0;
    double value = 0.0;
    Vec plan;        // production amounts at the best price
    int evaluations = 0;
};

// two-level grid over the price in [0, price_max]: coarse step, then the fine step around the incumbent;
// each grid point is one fixed-price solve of the given kind
ShipmentSolve solve_shipment_grid(const ShipmentConfig& cfg, ReformKind kind, double coarse = 0.1, double fine = 0.01,
                                  double price_max = 10.0);

enum class ShiftKind { None, Skew, MeanShift, ModeDelta };
struct Shift {
    ShiftKind kind = ShiftKind::None;
    double value = 0.0;  // skew shape, mean offset, or mass moved from mode 2 to mode 1
};

struct OosResult {
    double cost = 0.0;  // first-stage cost plus average recourse cost
    double first_stage = 0.0;
    std::vector<int> counts;
};

// per-mode counts by largest remainder; ties go to the more probable mode
std::vector<int> scenario_counts(const Vec& p, int n);

OosResult oos_evaluate(const D3ROInstance& inst, const GroundTruth& truth, const Vec& y, int n, std::uint64_t seed,
                       const Shift& shift = {});

}  // namespace d3ro
