#include "storeq/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "storeq/errors.hpp"

namespace storeq {

double daily_revenue(const std::vector<double>& price, const std::vector<double>& q,
                     const TimeGrid& grid) {
    if (price.size() != grid.size() || q.size() != grid.size())
        throw ConfigError("daily_revenue: path length does not match grid");
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.steps(); ++i) acc += price[i] * q[i];
    return acc * grid.dt();
}

double realized_volatility(const std::vector<double>& price, const TimeGrid& grid) {
    if (price.size() != grid.size())
        throw ConfigError("realized_volatility: path length does not match grid");
    const std::size_t n = grid.steps();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += price[i + 1] - price[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = price[i + 1] - price[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double steps_per_day = 24.0 / grid.dt();
    return sd * std::sqrt(steps_per_day);
}

double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ConfigError("quantile: empty sample");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double x = q * static_cast<double>(sorted.size() - 1);
    const std::size_t i = static_cast<std::size_t>(x);
    const double w = x - static_cast<double>(i);
    if (i + 1 >= sorted.size()) return sorted.back();
    return (1.0 - w) * sorted[i] + w * sorted[i + 1];
}

const std::vector<std::string>& ScenarioTable::builtin_ids() {
    static const std::vector<std::string> ids = {"N03", "N2", "N1", "M23", "M1"};
    return ids;
}

ScenarioTable ScenarioTable::builtin(const std::string& id) {
    ScenarioTable t;
    t.id = id;
    t.years = {2019.0, 2030.0, 2040.0, 2050.0};
    t.demand_mult = {1.0, 1.07, 1.19, 1.36};
    if (id == "N03") {
        t.renewable_mult = {1.0, 1.92, 2.58, 3.16};
        t.storage_gw = {5.0, 5.5, 7.1, 9.0};
    } else if (id == "N2") {
        t.renewable_mult = {1.0, 1.92, 2.84, 3.95};
        t.storage_gw = {5.0, 5.5, 8.0, 10.5};
    } else if (id == "N1") {
        t.renewable_mult = {1.0, 1.92, 3.35, 4.77};
        t.storage_gw = {5.0, 5.5, 8.1, 17.2};
    } else if (id == "M23") {
        t.renewable_mult = {1.0, 1.92, 3.83, 5.50};
        t.storage_gw = {5.0, 5.5, 11.6, 21.2};
    } else if (id == "M1") {
        t.renewable_mult = {1.0, 1.92, 4.29, 6.62};
        t.storage_gw = {5.0, 5.5, 15.7, 29.1};
    } else {
        throw ConfigError("ScenarioTable: unknown scenario id '" + id + "'");
    }
    return t;
}

void ScenarioTable::validate() const {
    const std::size_t n = years.size();
    if (n < 2 || renewable_mult.size() != n || storage_gw.size() != n || demand_mult.size() != n)
        throw ConfigError("ScenarioTable: column lengths must match and hold >= 2 years");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(years[i] > years[i - 1]))
            throw ConfigError("ScenarioTable: years must be strictly increasing");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (renewable_mult[i] < 1.0 || demand_mult[i] < 1.0 || storage_gw[i] < 0.0)
            throw ConfigError("ScenarioTable: coefficients out of range");
    }
}

namespace {

double interp_year(const std::vector<double>& years, const std::vector<double>& vals,
                   double year) {
    if (year < years.front() || year > years.back())
        throw ConfigError("ScenarioTable: year outside the table range");
    for (std::size_t i = 1; i < years.size(); ++i) {
        if (year <= years[i]) {
            const double w = (year - years[i - 1]) / (years[i] - years[i - 1]);
            return (1.0 - w) * vals[i - 1] + w * vals[i];
        }
    }
    return vals.back();
}

}  // namespace

double ScenarioTable::renewable_at(double year) const {
    return interp_year(years, renewable_mult, year);
}

double ScenarioTable::storage_at(double year) const { return interp_year(years, storage_gw, year); }

double ScenarioTable::demand_at(double year) const { return interp_year(years, demand_mult, year); }

RevenueReport summarize(const FbsdeSolution& sol, const StochMarket& market,
                        std::size_t reference_agent) {
    const std::size_t S = sol.grid.size();
    const std::vector<double> q = agent_withdrawal(sol, market, reference_agent);
    std::vector<double> revenues(sol.paths), vols(sol.paths);
    std::vector<double> price_row(S), q_row(S);
    for (std::size_t p = 0; p < sol.paths; ++p) {
        std::copy(sol.price.begin() + p * S, sol.price.begin() + (p + 1) * S, price_row.begin());
        std::copy(q.begin() + p * S, q.begin() + (p + 1) * S, q_row.begin());
        revenues[p] = daily_revenue(price_row, q_row, sol.grid);
        vols[p] = realized_volatility(price_row, sol.grid);
    }
    RevenueReport rep;
    rep.days = sol.paths;
    rep.seed = sol.seed;
    rep.converged = sol.converged;
    double rsum = 0.0, vsum = 0.0;
    for (std::size_t p = 0; p < sol.paths; ++p) {
        rsum += revenues[p];
        vsum += vols[p];
    }
    rep.mean_revenue = rsum / static_cast<double>(sol.paths);
    rep.mean_volatility = vsum / static_cast<double>(sol.paths);
    std::sort(revenues.begin(), revenues.end());
    std::sort(vols.begin(), vols.end());
    const std::array<double, 5> qs = {0.05, 0.25, 0.50, 0.75, 0.95};
    for (std::size_t k = 0; k < qs.size(); ++k) {
        rep.revenue_quantiles[k] = quantile(revenues, qs[k]);
        rep.volatility_quantiles[k] = quantile(vols, qs[k]);
    }
    return rep;
}

namespace {

// Market with the reference agent first, plus an optional aggregate block of
// `agents` one-MWh units.
StochMarket build_market(const ScenarioConfig& config, double aggregate_units) {
    StochMarket m = config.base;
    m.agents.clear();
    m.agents.push_back(config.unit_agent);
    if (aggregate_units > 0.0)
        m.agents.push_back(aggregate_agents(aggregate_units, config.unit_agent));
    return m;
}

}  // namespace

RevenueReport scenario_run(const ScenarioTable& table, double year, const ScenarioConfig& config,
                           const TimeGrid& grid, const SolveOptions& solver) {
    table.validate();
    const double units =
        config.intraday_share * table.storage_at(year) * config.mwh_per_gw;
    StochMarket m = build_market(config, units);
    m.renew_scale = config.base.renew_scale * table.renewable_at(year);
    m.demand_scale = config.base.demand_scale * table.demand_at(year);
    const FbsdeSolution sol = solve(m, grid, solver);
    return summarize(sol, m, 0);
}

std::vector<CannibalizationPoint> cannibalization_curve(const std::vector<double>& added_gwh,
                                                        const ScenarioConfig& config,
                                                        const TimeGrid& grid,
                                                        const SolveOptions& solver) {
    if (added_gwh.empty() || added_gwh.front() != 0.0)
        throw ConfigError("cannibalization_curve: ladder must start at 0");
    for (std::size_t i = 1; i < added_gwh.size(); ++i) {
        if (!(added_gwh[i] > added_gwh[i - 1]))
            throw ConfigError("cannibalization_curve: ladder must be strictly increasing");
    }
    std::vector<CannibalizationPoint> out;
    out.reserve(added_gwh.size());
    double baseline = 0.0;
    for (double gwh : added_gwh) {
        StochMarket m = build_market(config, gwh * 1000.0);
        const FbsdeSolution sol = solve(m, grid, solver);
        const RevenueReport rep = summarize(sol, m, 0);
        CannibalizationPoint pt;
        pt.added_gwh = gwh;
        pt.mean_revenue = rep.mean_revenue;
        if (out.empty()) baseline = rep.mean_revenue;
        pt.ratio = rep.mean_revenue / baseline;
        out.push_back(pt);
    }
    return out;
}

}  // namespace storeq
