#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "storeq/curves.hpp"
#include "storeq/grid.hpp"
#include "storeq/lq_control.hpp"
#include "storeq/ou.hpp"

namespace storeq {

// Stochastic intraday market: linear conventional supply, price caps,
// heterogeneous storage agents and OU-driven demand / renewables shocks.
// Residual demand along a path is
//   D_t = demand_scale * (profile(t) + demand_shock_t) - renew_scale * renew_shock_t.
struct StochMarket {
    double C0 = 0.0;
    double C1 = 1.0;
    double P_low = -std::numeric_limits<double>::infinity();
    double P_high = std::numeric_limits<double>::infinity();
    Curve demand_profile;                  // deterministic component (MW)
    std::optional<OUModel> demand_shock;   // intraday demand residual OU
    std::optional<OUModel> renew_shock;    // intraday renewables residual OU
    double demand_scale = 1.0;
    double renew_scale = 1.0;
    std::vector<AgentParams> agents;

    void validate() const;
    double inverse_supply_slope() const;  // C1 + sum_j 1/(2 alpha_j)
    bool has_noise() const;
};

// Per-agent control kernels f, F1, F2 precomputed on the grid.
struct BackwardCoefficients {
    std::vector<double> omega;    // per agent
    std::vector<double> u;        // per agent
    std::vector<double> f;        // [agent * grid.size() + step]
    std::vector<double> F1;
    std::vector<double> F2;
    std::size_t n_steps_plus_1 = 0;

    BackwardCoefficients(const std::vector<AgentParams>& agents, const TimeGrid& grid);
    double f_at(std::size_t agent, std::size_t step) const { return f[agent * n_steps_plus_1 + step]; }
    double F1_at(std::size_t agent, std::size_t step) const { return F1[agent * n_steps_plus_1 + step]; }
    double F2_at(std::size_t agent, std::size_t step) const { return F2[agent * n_steps_plus_1 + step]; }
};

// Capped inverse of the aggregate supply map applied to the net demand after
// subtracting every agent's state- and expectation-dependent terms:
//   P = L^{-1}(D - sum_j [omega_j f_j (Q_j - Q0_j) - F1_j Y1_j + F2_j Y2_j]) clamped to the caps.
double price_map(double t, const std::vector<double>& Q, const std::vector<double>& kappa,
                 double D, const std::vector<double>& Y1, const std::vector<double>& Y2,
                 const StochMarket& market, double horizon);

struct SolveOptions {
    std::size_t paths = 4000;
    std::size_t max_iterations = 20;
    double tolerance = 1e-3;     // sup-norm change of the price field between iterations
    int basis_degree = 2;
    std::uint64_t seed = 0;
    bool parallel = true;        // OpenMP over paths; results identical either way
};

struct FbsdeSolution {
    TimeGrid grid;
    std::size_t n_agents = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<double> price_changes;  // sup |P^m - P^{m-1}| per iteration
    std::vector<double> y_changes;      // sup |Y^m - Y^{m-1}| per iteration

    std::vector<double> demand;  // residual demand, paths x (n+1), row-major
    std::vector<double> price;
    std::vector<std::vector<double>> Q;      // per agent
    std::vector<std::vector<double>> Y1;     // per agent (regression-fitted values)
    std::vector<std::vector<double>> Y2;
    std::vector<std::vector<double>> kappa;  // per agent (empty if no model)
    std::vector<std::vector<double>> z_diag; // per agent: per-step mean Z estimate
    std::size_t paths = 0;

    double at(const std::vector<double>& field, std::size_t path, std::size_t step) const {
        return field[path * grid.size() + step];
    }
};

// Picard / least-squares-regression solver for the coupled forward-backward
// system defining the equilibrium price. Returns a (possibly non-converged,
// flagged) solution; throws BasisDegeneracyError when a regression design has
// more basis functions than paths or no usable direction at all.
FbsdeSolution solve(const StochMarket& market, const TimeGrid& grid, const SolveOptions& options);

struct StepResidual {
    double mean = 0.0;            // mean |D - C(P) - sum q| over uncapped paths
    double p99 = 0.0;             // 99th percentile over uncapped paths
    double capped_fraction = 0.0; // fraction of paths at a price cap
    double mean_capped_slack = 0.0;  // one-sided slack D - C(P) - sum q at capped paths
};

// Market-clearing residual per time step, with agents' withdrawals rebuilt
// from the backward components.
std::vector<StepResidual> clearing_residual(const FbsdeSolution& sol, const StochMarket& market);

// One agent's withdrawal rate rebuilt from the solution's state and backward
// components, paths x grid.size() row-major.
std::vector<double> agent_withdrawal(const FbsdeSolution& sol, const StochMarket& market,
                                     std::size_t agent);

}  // namespace storeq
