#include "storeq/det_equilibrium.hpp"

#include <cmath>
#include <functional>

#include "storeq/errors.hpp"
#include "storeq/quadrature.hpp"

namespace storeq {

namespace {

constexpr std::size_t kQuadSubsteps = 8;  // internal refinement of quadratures

// Running convolutions int_0^t sinh(w (t-s)) g(s) ds and the cosh analogue,
// evaluated at every node of a refined grid through the split
// sinh(w(t-s)) = (e^{w t} e^{-w s} - e^{-w t} e^{w s}) / 2.
struct Convolutions {
    double dt;
    std::vector<double> sinh_conv;
    std::vector<double> cosh_conv;
};

Convolutions convolve(const std::function<double(double)>& g, double w, double horizon,
                      std::size_t fine_n) {
    Convolutions out;
    out.dt = horizon / static_cast<double>(fine_n);
    out.sinh_conv.assign(fine_n + 1, 0.0);
    out.cosh_conv.assign(fine_n + 1, 0.0);
    double j_minus = 0.0;  // int_0^t e^{-w s} g ds
    double j_plus = 0.0;   // int_0^t e^{+w s} g ds
    for (std::size_t k = 1; k <= fine_n; ++k) {
        const double a = out.dt * static_cast<double>(k - 1);
        const double b = out.dt * static_cast<double>(k);
        j_minus += gauss4([&](double s) { return std::exp(-w * s) * g(s); }, a, b);
        j_plus += gauss4([&](double s) { return std::exp(w * s) * g(s); }, a, b);
        const double ep = std::exp(w * b);
        const double em = std::exp(-w * b);
        out.sinh_conv[k] = 0.5 * (ep * j_minus - em * j_plus);
        out.cosh_conv[k] = 0.5 * (ep * j_minus + em * j_plus);
    }
    return out;
}

}  // namespace

void DetMarket::validate() const {
    if (!(C1 > 0.0)) throw ConfigError("DetMarket: C1 must be positive");
    if (demand.empty()) throw ConfigError("DetMarket: demand curve missing");
    agent.validate();
    if (agent.rho != 0.0 || agent.jumps || (agent.kappa && agent.kappa->sigma != 0.0))
        throw ConfigError("DetMarket: agent must be noise-free in the deterministic model");
    if (agent.q0_bar != 0.0)
        throw ConfigError("DetMarket: deterministic model assumes a zero reference level");
}

double exogenous_c1(const PriceTrajectory& price, const AgentParams& params) {
    const TimeGrid& grid = price.grid;
    const double T = grid.horizon();
    const ControlCoefficients c(params, T);
    const double om = c.omega;
    const double inv2a = 1.0 / (2.0 * params.alpha);
    const std::size_t panels = grid.steps() * kQuadSubsteps;
    const double num_cosh = gauss4_composite(
        [&](double s) { return std::cosh(om * (T - s)) * price.at(s) * inv2a; }, 0.0, T, panels);
    const double num_sinh = gauss4_composite(
        [&](double s) { return std::sinh(om * (T - s)) / om * price.at(s) * inv2a; }, 0.0, T,
        panels);
    const double denom =
        params.gamma * om * std::sinh(om * T) + params.beta * std::cosh(om * T);
    return (params.gamma * num_cosh + params.beta * num_sinh) / denom;
}

AgentPath exogenous_strategy(const PriceTrajectory& price, const AgentParams& params,
                             const TimeGrid& grid) {
    const double T = grid.horizon();
    const ControlCoefficients c(params, T);
    const double om = c.omega;
    const double inv2a = 1.0 / (2.0 * params.alpha);
    const double c1 = exogenous_c1(price, params);

    const std::size_t fine_n = grid.steps() * kQuadSubsteps;
    const auto conv =
        convolve([&](double s) { return price.at(s) * inv2a; }, om, T, fine_n);

    AgentPath out;
    out.q.resize(grid.size());
    out.Q.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.t(i);
        const std::size_t k = i * kQuadSubsteps;
        out.q[i] = -c1 * om * om * std::cosh(om * t) + price.at(t) * inv2a + om * conv.sinh_conv[k];
        out.Q[i] = c1 * om * std::sinh(om * t) - conv.cosh_conv[k];
    }
    return out;
}

EquilibriumConstants equilibrium_constants(const DetMarket& market, const TimeGrid& grid) {
    market.validate();
    const double T = grid.horizon();
    const AgentParams& ag = market.agent;
    const ControlCoefficients c(ag, T);
    const double om = c.omega;
    const double slope = market.C1 + 1.0 / (2.0 * ag.alpha);
    const double wt = om * std::sqrt(market.C1 / slope);

    const std::size_t panels = grid.steps() * kQuadSubsteps;
    auto excess = [&](double s) { return market.demand(s) - market.C0; };

    EquilibriumConstants k;
    k.omega_tilde = wt;
    k.A = om / (wt * slope) *
          gauss4_composite([&](double s) { return excess(s) * std::sinh(wt * (T - s)); }, 0.0, T,
                           panels);
    k.B = om * om * om / (wt * slope) *
          gauss4_composite([&](double s) { return std::cosh(om * s) * std::sinh(wt * (T - s)); },
                           0.0, T, panels);
    k.A_prime = om / slope *
                gauss4_composite([&](double s) { return excess(s) * std::cosh(wt * (T - s)); },
                                 0.0, T, panels);
    k.B_prime = om * om * om / slope *
                gauss4_composite(
                    [&](double s) { return std::cosh(om * s) * std::cosh(wt * (T - s)); }, 0.0, T,
                    panels);

    const double denom = 2.0 * ag.alpha * om *
                             (ag.gamma * om * std::sinh(om * T) + ag.beta * std::cosh(om * T)) -
                         ag.gamma * k.B_prime - ag.beta * k.B;
    const double scale = std::abs(2.0 * ag.alpha * om *
                                  (ag.gamma * om * std::sinh(om * T) + ag.beta * std::cosh(om * T))) +
                         std::abs(ag.gamma * k.B_prime) + std::abs(ag.beta * k.B);
    if (std::abs(denom) < 1e-12 * scale)
        throw SingularConfigurationError(
            "equilibrium_constants: vanishing denominator in the c1 equation");
    k.c1_tilde = (ag.gamma * k.A_prime + ag.beta * k.A) / denom;
    return k;
}

DetEquilibrium equilibrium_price(const DetMarket& market, const TimeGrid& grid) {
    const EquilibriumConstants k = equilibrium_constants(market, grid);
    const double T = grid.horizon();
    const AgentParams& ag = market.agent;
    const ControlCoefficients c(ag, T);
    const double om = c.omega;
    const double slope = market.C1 + 1.0 / (2.0 * ag.alpha);
    const double wt = k.omega_tilde;

    const std::size_t fine_n = grid.steps() * kQuadSubsteps;
    auto excess = [&](double s) { return market.demand(s) - market.C0; };
    const auto conv_excess = convolve(excess, wt, T, fine_n);
    const auto conv_cosh = convolve([&](double s) { return std::cosh(om * s); }, wt, T, fine_n);

    const double x_scale1 = om / (wt * slope);
    const double x_scale2 = k.c1_tilde * om * om * om / (wt * slope);
    auto x_at = [&](std::size_t fine_k) {
        return x_scale1 * conv_excess.sinh_conv[fine_k] + x_scale2 * conv_cosh.sinh_conv[fine_k];
    };
    auto price_fine = [&](std::size_t fine_k) {
        const double t = conv_excess.dt * static_cast<double>(fine_k);
        return (excess(t) - om / (2.0 * ag.alpha) * x_at(fine_k) +
                k.c1_tilde * om * om * std::cosh(om * t)) /
               slope;
    };

    DetEquilibrium out{grid, k, {}, {}, {}, {}};
    out.price.resize(grid.size());
    out.q.resize(grid.size());
    out.Q.resize(grid.size());
    out.X.resize(grid.size());

    // Q_t = -int_0^t q ds accumulated on the fine grid (Simpson panels).
    double q_cum = 0.0;
    double q_lag1 = 0.0, q_lag2 = 0.0;
    for (std::size_t fk = 0; fk <= fine_n; ++fk) {
        const double t = conv_excess.dt * static_cast<double>(fk);
        const double p = price_fine(fk);
        const double q = excess(t) - market.C1 * p;
        if (fk >= 2 && fk % 2 == 0) {
            q_cum += conv_excess.dt / 3.0 * (q_lag2 + 4.0 * q_lag1 + q);
        }
        if (fk % kQuadSubsteps == 0) {
            const std::size_t i = fk / kQuadSubsteps;
            out.price[i] = p;
            out.q[i] = q;
            out.Q[i] = -q_cum;
            out.X[i] = x_at(fk);
        }
        q_lag2 = q_lag1;
        q_lag1 = q;
    }
    return out;
}

double DetEquilibrium::clearing_residual(const DetMarket& market) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = market.demand(grid.t(i));
        worst = std::max(worst, std::abs(d - market.C0 - market.C1 * price[i] - q[i]));
    }
    return worst;
}

std::vector<LimitPoint> limit_checks(const DetMarket& market, const std::vector<double>& p_ladder,
                                     const TimeGrid& grid) {
    std::vector<LimitPoint> out;
    out.reserve(p_ladder.size());
    for (double p : p_ladder) {
        DetMarket scaled = market;
        scaled.agent = aggregate_agents(p, market.agent);
        const DetEquilibrium eq = equilibrium_price(scaled, grid);
        LimitPoint pt{p, 0.0, 0.0};
        const double h = grid.dt();
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double no_storage = (market.demand(grid.t(i)) - market.C0) / market.C1;
            pt.sup_price_deviation =
                std::max(pt.sup_price_deviation, std::abs(eq.price[i] - no_storage));
            if (i > 0 && i + 1 < grid.size()) {
                pt.sup_price_slope = std::max(
                    pt.sup_price_slope, std::abs(eq.price[i + 1] - eq.price[i - 1]) / (2.0 * h));
            }
        }
        out.push_back(pt);
    }
    return out;
}

}  // namespace storeq
