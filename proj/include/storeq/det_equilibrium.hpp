#pragma once

#include <cstddef>
#include <vector>

#include "storeq/curves.hpp"
#include "storeq/grid.hpp"
#include "storeq/lq_control.hpp"

namespace storeq {

// Deterministic toy market: linear conventional supply C0 + C1 P, a
// deterministic residual-demand curve and a single noise-free storage agent
// with zero reference level.
struct DetMarket {
    double C0;     // baseline net supply (MW)
    double C1;     // supply slope (MW per EUR/MWh)
    Curve demand;  // residual demand D_t (MW)
    AgentParams agent;

    void validate() const;
};

struct EquilibriumConstants {
    double omega_tilde;
    double A;
    double B;
    double A_prime;
    double B_prime;
    double c1_tilde;
};

struct DetEquilibrium {
    TimeGrid grid;
    EquilibriumConstants constants;
    std::vector<double> price;
    std::vector<double> q;
    std::vector<double> Q;
    std::vector<double> X;

    // max_i |D_i - C0 - C1 P_i - q_i|
    double clearing_residual(const DetMarket& market) const;
};

// c1(P): the scalar determining the exogenous-price optimal strategy.
double exogenous_c1(const PriceTrajectory& price, const AgentParams& params);

// Optimal strategy and state process for an exogenous deterministic price.
AgentPath exogenous_strategy(const PriceTrajectory& price, const AgentParams& params,
                             const TimeGrid& grid);

// The five quadratures and the equilibrium constant c1_tilde.
EquilibriumConstants equilibrium_constants(const DetMarket& market, const TimeGrid& grid);

// Explicit equilibrium price, withdrawal and state paths.
DetEquilibrium equilibrium_price(const DetMarket& market, const TimeGrid& grid);

struct LimitPoint {
    double p;
    double sup_price_deviation;  // vs the no-storage price (D - C0)/C1
    double sup_price_slope;      // finite-difference max |dP/dt|
};

// Low/high-storage limit behaviour over a ladder of aggregation counts.
std::vector<LimitPoint> limit_checks(const DetMarket& market, const std::vector<double>& p_ladder,
                                     const TimeGrid& grid);

}  // namespace storeq
