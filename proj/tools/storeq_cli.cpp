#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "storeq/csv_io.hpp"
#include "storeq/det_equilibrium.hpp"
#include "storeq/errors.hpp"
#include "storeq/fbsde.hpp"
#include "storeq/grid.hpp"
#include "storeq/lq_control.hpp"
#include "storeq/metrics.hpp"
#include "storeq/ou.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace storeq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNoConvergence = 4;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

double require_number(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    if (!j.at(key).is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
    return j.at(key).get<double>();
}

double number_or(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number())
        throw ConfigError(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

OUModel parse_ou(const json& j, const std::string& where) {
    check_keys(j, where, {"theta", "mu", "sigma", "x0"});
    OUModel m;
    m.theta = require_number(j, where, "theta");
    m.mu = require_number(j, where, "mu");
    m.sigma = require_number(j, where, "sigma");
    m.x0 = number_or(j, "x0", m.mu);
    m.validate();
    return m;
}

json dump_ou(const OUModel& m) {
    return json{{"theta", m.theta}, {"mu", m.mu}, {"sigma", m.sigma}, {"x0", m.x0}};
}

Curve parse_curve(const json& j, const std::string& where, double horizon, std::size_t steps) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::string type = j.value("type", "");
    if (type == "sinusoid") {
        check_keys(j, where, {"type", "theta1", "theta", "level"});
        return Curve::sinusoid(require_number(j, where, "theta1"),
                               require_number(j, where, "theta"),
                               require_number(j, where, "level"));
    }
    if (type == "constant") {
        check_keys(j, where, {"type", "value"});
        return Curve::constant(require_number(j, where, "value"));
    }
    if (type == "samples") {
        check_keys(j, where, {"type", "values"});
        if (!j.contains("values") || !j.at("values").is_array())
            throw ConfigError(where + ": 'values' must be an array");
        std::vector<double> vals = j.at("values").get<std::vector<double>>();
        if (vals.size() != steps + 1)
            throw ConfigError(where + ": need steps+1 sample values");
        return Curve::from_samples(TimeGrid(horizon, steps), std::move(vals));
    }
    throw ConfigError(where + ": 'type' must be sinusoid, constant or samples");
}

struct RunConfig {
    json raw;
    std::uint64_t seed = 0;
    double horizon = 24.0;
    std::size_t steps = 96;
    std::size_t paths = 2000;
    std::size_t max_iterations = 20;
    double tolerance = 1e-3;
    int basis_degree = 2;
    std::size_t substeps = 8;
    double aggregation = 1.0;
    AgentParams agent{84.0, 7.0, 500.0, 0.0, 0.0, {}, {}};
    bool has_market = false;
    double C0 = 0.0, C1 = 1.0;
    double P_low = -std::numeric_limits<double>::infinity();
    double P_high = std::numeric_limits<double>::infinity();
    json demand_spec;
    std::optional<OUModel> demand_shock, renew_shock;
    json price_spec;
    std::string data_csv;
    double data_dt = 1.0;
    bool data_allow_truncation = false;
    std::vector<double> ladder_gwh = {0.0, 2.0, 5.0, 10.0};
    std::string scenario_id = "N03";
    std::vector<double> scenario_years = {2019.0, 2030.0, 2040.0, 2050.0};
    double intraday_share = 0.25;
    double mwh_per_gw = 1000.0;
    std::string experiment;
};

RunConfig parse_config(const json& j) {
    check_keys(j, "config",
               {"version", "experiment", "seed", "horizon", "market", "agent", "aggregation",
                "numerics", "price", "data", "cannibalization", "scenario"});
    RunConfig c;
    c.raw = j;
    if (j.contains("version") && j.at("version").get<int>() != 1)
        throw ConfigError("config: unsupported version");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw ConfigError("config: seed must be a u64");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    c.horizon = number_or(j, "horizon", c.horizon);
    if (!(c.horizon > 0.0)) throw ConfigError("config: horizon must be positive");
    c.experiment = j.value("experiment", "");

    if (j.contains("numerics")) {
        const json& n = j.at("numerics");
        check_keys(n, "numerics",
                   {"steps", "paths", "max_iterations", "tolerance", "basis_degree", "substeps"});
        c.steps = static_cast<std::size_t>(number_or(n, "steps", static_cast<double>(c.steps)));
        c.paths = static_cast<std::size_t>(number_or(n, "paths", static_cast<double>(c.paths)));
        c.max_iterations = static_cast<std::size_t>(
            number_or(n, "max_iterations", static_cast<double>(c.max_iterations)));
        c.tolerance = number_or(n, "tolerance", c.tolerance);
        c.basis_degree = static_cast<int>(number_or(n, "basis_degree", c.basis_degree));
        c.substeps =
            static_cast<std::size_t>(number_or(n, "substeps", static_cast<double>(c.substeps)));
        if (c.steps < 2) throw ConfigError("numerics: steps must be at least 2");
        if (c.paths < 1) throw ConfigError("numerics: paths must be positive");
        if (!(c.tolerance > 0.0)) throw ConfigError("numerics: tolerance must be positive");
        if (c.basis_degree < 1 || c.basis_degree > 4)
            throw ConfigError("numerics: basis_degree must be in [1, 4]");
    }

    if (j.contains("agent")) {
        const json& a = j.at("agent");
        check_keys(a, "agent", {"alpha", "beta", "gamma", "rho", "q0_bar", "kappa", "jumps"});
        c.agent.alpha = require_number(a, "agent", "alpha");
        c.agent.beta = require_number(a, "agent", "beta");
        c.agent.gamma = require_number(a, "agent", "gamma");
        c.agent.rho = number_or(a, "rho", 0.0);
        c.agent.q0_bar = number_or(a, "q0_bar", 0.0);
        if (a.contains("kappa")) c.agent.kappa = parse_ou(a.at("kappa"), "agent.kappa");
        if (a.contains("jumps")) {
            const json& jj = a.at("jumps");
            check_keys(jj, "agent.jumps", {"intensity", "mark_mean", "mark_std"});
            JumpSpec spec;
            spec.intensity = require_number(jj, "agent.jumps", "intensity");
            spec.mark_mean = number_or(jj, "mark_mean", 0.0);
            spec.mark_std = number_or(jj, "mark_std", 0.0);
            c.agent.jumps = spec;
        }
        c.agent.validate();
    }
    c.aggregation = number_or(j, "aggregation", 1.0);
    if (c.aggregation < 0.0) throw ConfigError("config: aggregation must be non-negative");

    if (j.contains("market")) {
        const json& m = j.at("market");
        check_keys(m, "market",
                   {"C0", "C1", "P_low", "P_high", "demand", "demand_shock", "renewables_shock"});
        c.has_market = true;
        c.C0 = require_number(m, "market", "C0");
        c.C1 = require_number(m, "market", "C1");
        c.P_low = number_or(m, "P_low", c.P_low);
        c.P_high = number_or(m, "P_high", c.P_high);
        if (!m.contains("demand")) throw ConfigError("market: missing 'demand'");
        c.demand_spec = m.at("demand");
        parse_curve(c.demand_spec, "market.demand", c.horizon, c.steps);  // validates now
        if (m.contains("demand_shock"))
            c.demand_shock = parse_ou(m.at("demand_shock"), "market.demand_shock");
        if (m.contains("renewables_shock"))
            c.renew_shock = parse_ou(m.at("renewables_shock"), "market.renewables_shock");
    }

    if (j.contains("price")) {
        c.price_spec = j.at("price");
        parse_curve(c.price_spec, "price", c.horizon, c.steps);
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data", {"csv", "dt", "allow_truncation"});
        c.data_csv = d.value("csv", "");
        c.data_dt = number_or(d, "dt", 1.0);
        if (!(c.data_dt > 0.0)) throw ConfigError("data: dt must be positive");
        if (d.contains("allow_truncation")) {
            if (!d.at("allow_truncation").is_boolean())
                throw ConfigError("data: allow_truncation must be a boolean");
            c.data_allow_truncation = d.at("allow_truncation").get<bool>();
        }
    }

    if (j.contains("cannibalization")) {
        const json& cc = j.at("cannibalization");
        check_keys(cc, "cannibalization", {"ladder_gwh"});
        if (cc.contains("ladder_gwh"))
            c.ladder_gwh = cc.at("ladder_gwh").get<std::vector<double>>();
    }

    if (j.contains("scenario")) {
        const json& s = j.at("scenario");
        check_keys(s, "scenario", {"id", "years", "intraday_share", "mwh_per_gw"});
        c.scenario_id = s.value("id", c.scenario_id);
        if (s.contains("years")) c.scenario_years = s.at("years").get<std::vector<double>>();
        c.intraday_share = number_or(s, "intraday_share", c.intraday_share);
        c.mwh_per_gw = number_or(s, "mwh_per_gw", c.mwh_per_gw);
        if (!(c.intraday_share > 0.0) || c.intraday_share > 1.0)
            throw ConfigError("scenario: intraday_share must be in (0, 1]");
        if (!(c.mwh_per_gw > 0.0)) throw ConfigError("scenario: mwh_per_gw must be positive");
    }
    return c;
}

StochMarket stoch_market(const RunConfig& c) {
    if (!c.has_market) throw ConfigError("config: this experiment needs a 'market' block");
    StochMarket m;
    m.C0 = c.C0;
    m.C1 = c.C1;
    m.P_low = c.P_low;
    m.P_high = c.P_high;
    m.demand_profile = parse_curve(c.demand_spec, "market.demand", c.horizon, c.steps);
    m.demand_shock = c.demand_shock;
    m.renew_shock = c.renew_shock;
    if (c.aggregation > 0.0) m.agents.push_back(aggregate_agents(c.aggregation, c.agent));
    return m;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

json resolved_config(const RunConfig& c, const std::string& mode) {
    json r = c.raw;
    r["experiment"] = mode;
    r["seed"] = c.seed;
    r["horizon"] = c.horizon;
    r["numerics"] = {{"steps", c.steps},         {"paths", c.paths},
                     {"max_iterations", c.max_iterations}, {"tolerance", c.tolerance},
                     {"basis_degree", c.basis_degree},     {"substeps", c.substeps}};
    return r;
}

void write_summary(const fs::path& out_dir, const RunConfig& c, const std::string& mode,
                   const json& results) {
    const json resolved = resolved_config(c, mode);
    char hash_hex[20];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a(resolved.dump())));
    json summary{{"mode", mode},
                 {"seed", c.seed},
                 {"config", resolved},
                 {"config_hash", hash_hex},
                 {"results", results},
                 {"timestamp", static_cast<long long>(std::time(nullptr))}};
    std::ofstream out(out_dir / "summary.json");
    if (!out) throw DataError("cannot write summary.json");
    out << summary.dump(2) << '\n';
}

std::vector<double> step_quantile(const FbsdeSolution& sol, const std::vector<double>& field,
                                  double q) {
    const std::size_t S = sol.grid.size();
    std::vector<double> out(S);
    std::vector<double> col(sol.paths);
    for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t p = 0; p < sol.paths; ++p) col[p] = field[p * S + i];
        std::sort(col.begin(), col.end());
        out[i] = quantile(col, q);
    }
    return out;
}

int run_control(const RunConfig& c, const fs::path& out_dir) {
    if (c.price_spec.is_null()) throw ConfigError("control: config needs a 'price' block");
    TimeGrid grid(c.horizon, c.steps);
    PriceTrajectory price(grid, parse_curve(c.price_spec, "price", c.horizon, c.steps));
    SimulateOptions opt;
    opt.substeps = c.substeps;
    AgentParams agent =
        c.aggregation == 1.0 ? c.agent : aggregate_agents(c.aggregation, c.agent);
    AgentPath path = simulate_agent(agent, price, grid, c.seed, opt);
    write_csv(out_dir / "trajectory.csv", {"time", "price", "q", "Q"},
              {grid.times(), price.values(), path.q, path.Q});
    const double revenue = daily_revenue(price.values(), path.q, grid);
    write_summary(out_dir, c, "control",
                  json{{"revenue", revenue},
                       {"terminal_Q", path.Q.back()},
                       {"cost", control_cost(agent, price.values(), path.q, path.Q, grid)}});
    return kExitOk;
}

int run_det_eq(const RunConfig& c, const fs::path& out_dir) {
    if (!c.has_market) throw ConfigError("det-eq: config needs a 'market' block");
    TimeGrid grid(c.horizon, c.steps);
    DetMarket market{c.C0, c.C1, parse_curve(c.demand_spec, "market.demand", c.horizon, c.steps),
                     c.aggregation == 1.0 ? c.agent : aggregate_agents(c.aggregation, c.agent)};
    DetEquilibrium eq = equilibrium_price(market, grid);
    std::vector<double> demand(grid.size()), residual(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        demand[i] = market.demand(grid.t(i));
        residual[i] = demand[i] - market.C0 - market.C1 * eq.price[i] - eq.q[i];
    }
    write_csv(out_dir / "equilibrium.csv",
              {"time", "price", "q", "Q", "X", "demand", "clearing_residual"},
              {grid.times(), eq.price, eq.q, eq.Q, eq.X, demand, residual});
    write_summary(out_dir, c, "det-eq",
                  json{{"clearing_residual", eq.clearing_residual(market)},
                       {"c1_tilde", eq.constants.c1_tilde},
                       {"omega_tilde", eq.constants.omega_tilde}});
    return kExitOk;
}

int run_sto_eq(const RunConfig& c, const fs::path& out_dir) {
    TimeGrid grid(c.horizon, c.steps);
    StochMarket market = stoch_market(c);
    SolveOptions opt;
    opt.paths = c.paths;
    opt.max_iterations = c.max_iterations;
    opt.tolerance = c.tolerance;
    opt.basis_degree = c.basis_degree;
    opt.seed = c.seed;
    FbsdeSolution sol = solve(market, grid, opt);
    const auto residual = clearing_residual(sol, market);

    std::vector<double> mean_price(grid.size(), 0.0), mean_Q(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t p = 0; p < sol.paths; ++p) {
            mean_price[i] += sol.at(sol.price, p, i);
            if (!sol.Q.empty()) mean_Q[i] += sol.at(sol.Q[0], p, i);
        }
        mean_price[i] /= static_cast<double>(sol.paths);
        mean_Q[i] /= static_cast<double>(sol.paths);
    }
    std::vector<double> res_mean(grid.size()), res_p99(grid.size()), capped(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        res_mean[i] = residual[i].mean;
        res_p99[i] = residual[i].p99;
        capped[i] = residual[i].capped_fraction;
    }
    write_csv(out_dir / "sto_eq.csv",
              {"time", "price_mean", "price_p05", "price_p95", "Q_mean", "residual_mean",
               "residual_p99", "capped_fraction"},
              {grid.times(), mean_price, step_quantile(sol, sol.price, 0.05),
               step_quantile(sol, sol.price, 0.95), mean_Q, res_mean, res_p99, capped});

    const std::size_t n_samples = std::min<std::size_t>(sol.paths, 8);
    std::vector<std::vector<double>> sample_cols{grid.times()};
    std::vector<std::string> sample_hdr{"time"};
    for (std::size_t p = 0; p < n_samples; ++p) {
        sample_cols.emplace_back(sol.price.begin() + p * grid.size(),
                                 sol.price.begin() + (p + 1) * grid.size());
        sample_hdr.push_back("price_path_" + std::to_string(p));
    }
    write_csv(out_dir / "price_samples.csv", sample_hdr, sample_cols);

    write_summary(out_dir, c, "sto-eq",
                  json{{"converged", sol.converged},
                       {"iterations", sol.iterations},
                       {"y_changes", sol.y_changes},
                       {"price_changes", sol.price_changes}});
    return sol.converged ? kExitOk : kExitNoConvergence;
}

int run_calibrate(const RunConfig& c, const fs::path& out_dir) {
    if (c.data_csv.empty()) throw ConfigError("calibrate: config needs data.csv");
    HourlySeries series = read_hourly_csv(c.data_csv);
    DeseasonalizeResult des = deseasonalize(series.values, c.data_allow_truncation);
    OUFitDiagnostics diag;
    OUModel model = ou_mle_fit(des.residuals, c.data_dt, &diag);
    json profile = json::array();
    for (double v : des.profile.slots()) profile.push_back(v);
    json results{{"model", dump_ou(model)},
                 {"profile", profile},
                 {"diagnostics",
                  {{"ar_slope", diag.ar_slope},
                   {"ar_intercept", diag.ar_intercept},
                   {"observations", diag.observations},
                   {"near_white_noise", diag.near_white_noise}}}};
    if (diag.near_white_noise)
        std::cerr << "warning: theta*dt > 5, near-white-noise regime; theta is weakly "
                     "identified at this sampling rate\n";
    std::ofstream mf(out_dir / "model.json");
    if (!mf) throw DataError("cannot write model.json");
    mf << results.dump(2) << '\n';
    write_summary(out_dir, c, "calibrate", results);
    return kExitOk;
}

ScenarioConfig scenario_config(const RunConfig& c) {
    ScenarioConfig sc;
    sc.base = stoch_market(c);
    sc.base.agents.clear();
    sc.unit_agent = c.agent;
    sc.intraday_share = c.intraday_share;
    sc.mwh_per_gw = c.mwh_per_gw;
    return sc;
}

SolveOptions solver_options(const RunConfig& c) {
    SolveOptions opt;
    opt.paths = c.paths;
    opt.max_iterations = c.max_iterations;
    opt.tolerance = c.tolerance;
    opt.basis_degree = c.basis_degree;
    opt.seed = c.seed;
    return opt;
}

int run_cannibalize(const RunConfig& c, const fs::path& out_dir) {
    TimeGrid grid(c.horizon, c.steps);
    const auto curve = cannibalization_curve(c.ladder_gwh, scenario_config(c), grid,
                                             solver_options(c));
    std::vector<double> gwh, rev, ratio;
    for (const auto& pt : curve) {
        gwh.push_back(pt.added_gwh);
        rev.push_back(pt.mean_revenue);
        ratio.push_back(pt.ratio);
    }
    write_csv(out_dir / "cannibalization.csv", {"added_gwh", "mean_revenue", "ratio"},
              {gwh, rev, ratio});
    json results = json::array();
    for (const auto& pt : curve)
        results.push_back(
            {{"added_gwh", pt.added_gwh}, {"mean_revenue", pt.mean_revenue}, {"ratio", pt.ratio}});
    write_summary(out_dir, c, "cannibalize", json{{"curve", results}});
    return kExitOk;
}

int run_scenario(const RunConfig& c, const fs::path& out_dir) {
    TimeGrid grid(c.horizon, c.steps);
    const ScenarioConfig sc = scenario_config(c);
    const SolveOptions opt = solver_options(c);
    std::vector<std::string> ids;
    if (c.scenario_id == "all") ids = ScenarioTable::builtin_ids();
    else ids.push_back(c.scenario_id);

    std::ofstream csv(out_dir / "scenario.csv");
    if (!csv) throw DataError("cannot write scenario.csv");
    csv << "scenario,year,statistic,value\n";
    json results = json::array();
    const char* qnames[5] = {"q05", "q25", "q50", "q75", "q95"};
    for (const std::string& id : ids) {
        const ScenarioTable table = ScenarioTable::builtin(id);
        for (double year : c.scenario_years) {
            const RevenueReport rep = scenario_run(table, year, sc, grid, opt);
            char buf[64];
            auto emit = [&](const char* name, double v) {
                std::snprintf(buf, sizeof(buf), "%.10g", v);
                csv << id << ',' << year << ',' << name << ',' << buf << '\n';
            };
            emit("mean_revenue", rep.mean_revenue);
            emit("mean_volatility", rep.mean_volatility);
            for (int k = 0; k < 5; ++k) {
                emit((std::string("revenue_") + qnames[k]).c_str(), rep.revenue_quantiles[k]);
                emit((std::string("volatility_") + qnames[k]).c_str(),
                     rep.volatility_quantiles[k]);
            }
            results.push_back({{"scenario", id},
                               {"year", year},
                               {"mean_revenue", rep.mean_revenue},
                               {"mean_volatility", rep.mean_volatility},
                               {"revenue_quantiles", rep.revenue_quantiles},
                               {"volatility_quantiles", rep.volatility_quantiles},
                               {"converged", rep.converged}});
        }
    }
    write_summary(out_dir, c, "scenario", json{{"reports", results}});
    return kExitOk;
}

int run_validate(const RunConfig& c, const json& raw) {
    json violations = json::array();
    json warnings = json::array();
    (void)raw;
    if (c.has_market) {
        if (!(c.C1 > 0.0))
            violations.push_back("market.C1 must be positive (supply map not invertible)");
        if (!(c.P_low < c.P_high)) violations.push_back("market: P_low must be below P_high");
    }
    if (!(c.agent.alpha > 0.0)) violations.push_back("agent.alpha must be positive");
    if (!(c.agent.beta > 0.0)) violations.push_back("agent.beta must be positive");
    if (!(c.agent.gamma > 0.0)) violations.push_back("agent.gamma must be positive");
    const bool no_noise = (!c.demand_shock || c.demand_shock->sigma == 0.0) &&
                          (!c.renew_shock || c.renew_shock->sigma == 0.0) &&
                          c.agent.rho == 0.0 &&
                          (!c.agent.kappa || c.agent.kappa->sigma == 0.0);
    if (no_noise && c.experiment == "sto-eq")
        warnings.push_back(
            "all noise sources are zero: the regression degenerates to per-step constants");
    if (c.demand_shock && c.demand_shock->theta * (c.horizon / static_cast<double>(c.steps)) > 5.0)
        warnings.push_back("demand_shock: theta * dt > 5 (near-white-noise regime)");
    if (c.renew_shock && c.renew_shock->theta * (c.horizon / static_cast<double>(c.steps)) > 5.0)
        warnings.push_back("renewables_shock: theta * dt > 5 (near-white-noise regime)");
    json report{{"violations", violations}, {"warnings", warnings}};
    std::cout << report.dump(2) << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Storage dispatch and intraday equilibrium price toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    std::optional<std::size_t> paths_override, steps_override;
    std::optional<int> threads_override;

    const std::vector<std::string> modes = {"control",     "det-eq",   "sto-eq",  "calibrate",
                                            "cannibalize", "scenario", "validate"};
    for (const std::string& m : modes) {
        CLI::App* sub = app.add_subcommand(m);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "master seed override");
        sub->add_option("--paths", paths_override, "path count override");
        sub->add_option("--steps", steps_override, "time step count override");
        sub->add_option("--threads", threads_override, "OpenMP thread count");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string mode = app.get_subcommands().front()->get_name();

    int threads = 0;
    if (threads_override) threads = *threads_override;
    else if (const char* env = std::getenv("STOREQ_THREADS")) threads = std::atoi(env);
    if (threads > 0) omp_set_num_threads(threads);

    try {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config '" << config_path << "'\n";
            return kExitData;
        }
        json raw;
        try {
            raw = json::parse(in);
        } catch (const json::exception& e) {
            std::cerr << "error: config is not valid JSON: " << e.what() << '\n';
            return kExitConfig;
        }
        RunConfig cfg;
        try {
            cfg = parse_config(raw);
        } catch (const ConfigError& e) {
            if (mode == "validate") {
                // dry-run mode reports schema problems instead of failing on them
                json report{{"violations", json::array({e.what()})}, {"warnings", json::array()}};
                std::cout << report.dump(2) << '\n';
                return kExitOk;
            }
            throw;
        }
        if (seed_override) cfg.seed = *seed_override;
        if (paths_override) cfg.paths = *paths_override;
        if (steps_override) cfg.steps = *steps_override;

        if (mode == "validate") return run_validate(cfg, raw);

        fs::create_directories(out_dir);
        const fs::path out(out_dir);
        if (mode == "control") return run_control(cfg, out);
        if (mode == "det-eq") return run_det_eq(cfg, out);
        if (mode == "sto-eq") return run_sto_eq(cfg, out);
        if (mode == "calibrate") return run_calibrate(cfg, out);
        if (mode == "cannibalize") return run_cannibalize(cfg, out);
        if (mode == "scenario") return run_scenario(cfg, out);
        std::cerr << "error: unknown mode\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NonStationaryFitError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}
