#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "storeq/fbsde.hpp"
#include "storeq/grid.hpp"

namespace storeq {

// Gross arbitrage cash flow sum_i P_i q_i dt over the day; penalty terms of
// the control objective are excluded.
double daily_revenue(const std::vector<double>& price, const std::vector<double>& q,
                     const TimeGrid& grid);

// Sample standard deviation of one-step price increments, scaled by
// sqrt(steps per day); reported in EUR/MWh per sqrt(day).
double realized_volatility(const std::vector<double>& price, const TimeGrid& grid);

// Order-statistics quantile with linear interpolation; `sorted` ascending.
double quantile(const std::vector<double>& sorted, double q);

// Prospective energy-mix trajectory: per-anchor-year renewable multiplier,
// installed storage capacity (GW) and demand multiplier, linearly
// interpolated between anchors.
struct ScenarioTable {
    std::string id;
    std::vector<double> years;
    std::vector<double> renewable_mult;
    std::vector<double> storage_gw;
    std::vector<double> demand_mult;

    // Built-in tables for the five trajectories N03, N2, N1, M23, M1.
    static ScenarioTable builtin(const std::string& id);
    static const std::vector<std::string>& builtin_ids();

    void validate() const;
    double renewable_at(double year) const;
    double storage_at(double year) const;
    double demand_at(double year) const;
};

// Market template for long-term experiments: supply curve, shock models and
// the 1 MWh reference agent whose revenue is tracked. The agent list of
// `base` is ignored; it is rebuilt per configuration.
struct ScenarioConfig {
    StochMarket base;
    AgentParams unit_agent;
    double intraday_share = 0.25;  // share of installed capacity in this market
    double mwh_per_gw = 1000.0;    // nameplate GW read as GWh, expressed in MWh
};

struct RevenueReport {
    double mean_revenue = 0.0;
    std::array<double, 5> revenue_quantiles{};  // 5/25/50/75/95%
    double mean_volatility = 0.0;
    std::array<double, 5> volatility_quantiles{};
    std::size_t days = 0;
    std::uint64_t seed = 0;
    bool converged = true;
};

// Reference-agent revenue and price-volatility statistics over `paths`
// simulated days under the year's scenario coefficients.
RevenueReport scenario_run(const ScenarioTable& table, double year, const ScenarioConfig& config,
                           const TimeGrid& grid, const SolveOptions& solver);

struct CannibalizationPoint {
    double added_gwh = 0.0;
    double mean_revenue = 0.0;
    double ratio = 0.0;  // vs the zero-added baseline
};

// Mean daily revenue of the reference agent for each ladder point of added
// aggregate storage; the ratio at zero added capacity is exactly 1.
std::vector<CannibalizationPoint> cannibalization_curve(const std::vector<double>& added_gwh,
                                                        const ScenarioConfig& config,
                                                        const TimeGrid& grid,
                                                        const SolveOptions& solver);

// Revenue/volatility statistics of an existing solution's reference agent.
RevenueReport summarize(const FbsdeSolution& sol, const StochMarket& market,
                        std::size_t reference_agent);

}  // namespace storeq
