#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "storeq/det_equilibrium.hpp"
#include "storeq/errors.hpp"

using namespace storeq;

namespace {

const AgentParams kUnit{84.0, 7.0, 500.0, 0.0, 0.0, {}, {}};

DetMarket paper_market() {
    return DetMarket{-7546.0, 151.77, Curve::sinusoid(6862.5, M_PI / 6.0, 1500.0),
                     aggregate_agents(10000.0, kUnit)};
}

double max_abs_demand(const DetMarket& m, const TimeGrid& g) {
    double out = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) out = std::max(out, std::abs(m.demand(g.t(i))));
    return out;
}

}  // namespace

TEST_CASE("exogenous strategy matches the Pontryagin boundary-value solution") {
    TimeGrid grid(24.0, 96);
    auto fn = [](double t) { return oracles::smooth_price_at(t, 4); };
    PriceTrajectory price(grid, Curve::from_function(fn));
    AgentPath open_loop = exogenous_strategy(price, kUnit, grid);
    std::vector<double> bvp = oracles::shooting_minimizer(kUnit, fn, kUnit.q0_bar, grid, 32);
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        scale = std::max(scale, std::abs(bvp[i]));
        err = std::max(err, std::abs(open_loop.q[i] - bvp[i]));
    }
    CHECK(err < 1e-5 * scale);
}

TEST_CASE("open-loop and feedback representations produce the same trajectory") {
    TimeGrid grid(24.0, 96);
    PriceTrajectory price(grid, Curve::sinusoid(18.0, 2.0 * M_PI / 24.0, 62.0));
    AgentPath open_loop = exogenous_strategy(price, kUnit, grid);
    AgentPath feedback = simulate_agent(kUnit, price, grid, 0);
    for (std::size_t i = 0; i < grid.size(); i += 7) {
        CHECK(open_loop.q[i] == doctest::Approx(feedback.q[i]).epsilon(1e-6));
        CHECK(open_loop.Q[i] == doctest::Approx(feedback.Q[i]).epsilon(1e-6));
    }
}

TEST_CASE("market clears on the reference calibration") {
    DetMarket m = paper_market();
    TimeGrid grid(24.0, 96);
    DetEquilibrium eq = equilibrium_price(m, grid);
    CHECK(eq.clearing_residual(m) < 1e-6 * max_abs_demand(m, grid));
}

TEST_CASE("reference calibration price levels") {
    DetMarket m = paper_market();
    TimeGrid grid(24.0, 96);
    DetEquilibrium eq = equilibrium_price(m, grid);
    CHECK(eq.price[0] == doctest::Approx(64.4576).epsilon(1e-4));
    CHECK(eq.price[48] == doctest::Approx(59.5690).epsilon(1e-4));   // t = 12 h
    CHECK(eq.price[96] == doctest::Approx(54.0996).epsilon(1e-4));   // t = 24 h
    CHECK(eq.constants.omega_tilde == doctest::Approx(0.2446577387).epsilon(1e-9));
}

TEST_CASE("equilibrium price is a fixed point of the best response") {
    DetMarket m = paper_market();
    TimeGrid grid(24.0, 384);
    DetEquilibrium eq = equilibrium_price(m, grid);
    PriceTrajectory price(grid, eq.price);
    AgentPath best = exogenous_strategy(price, m.agent, grid);
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        scale = std::max(scale, std::abs(eq.q[i]));
        err = std::max(err, std::abs(best.q[i] - eq.q[i]));
    }
    CHECK(err < 1e-4 * scale);
}

TEST_CASE("equilibrium withdrawal is minus the state derivative") {
    DetMarket m = paper_market();
    TimeGrid grid(24.0, 960);
    DetEquilibrium eq = equilibrium_price(m, grid);
    const double h = grid.dt();
    for (std::size_t i = 1; i + 1 < grid.size(); i += 53) {
        const double dQ = (eq.Q[i + 1] - eq.Q[i - 1]) / (2.0 * h);
        CHECK(-dQ == doctest::Approx(eq.q[i]).epsilon(1e-4));
    }
}

TEST_CASE("equilibrium is linear in the demand scale") {
    DetMarket m = paper_market();
    TimeGrid grid(24.0, 96);
    const double lam = 2.5;
    DetMarket scaled = m;
    scaled.C0 = lam * m.C0;
    scaled.demand = Curve::sinusoid(lam * 6862.5, M_PI / 6.0, lam * 1500.0);
    DetEquilibrium eq = equilibrium_price(m, grid);
    DetEquilibrium eqs = equilibrium_price(scaled, grid);
    for (std::size_t i = 0; i < grid.size(); i += 13) {
        CHECK(eqs.price[i] == doctest::Approx(lam * eq.price[i]).epsilon(1e-8));
        CHECK(eqs.q[i] == doctest::Approx(lam * eq.q[i]).epsilon(1e-8));
        CHECK(eqs.Q[i] == doctest::Approx(lam * eq.Q[i]).epsilon(1e-8));
    }
}

TEST_CASE("vanishing storage recovers the no-storage price") {
    DetMarket m = paper_market();
    m.agent = kUnit;
    TimeGrid grid(24.0, 96);
    const auto pts = limit_checks(m, {1e-6}, grid);
    REQUIRE(pts.size() == 1);
    // no-storage price has amplitude ~45 EUR/MWh; deviation must be negligible
    CHECK(pts[0].sup_price_deviation < 1e-3);
}

TEST_CASE("growing storage flattens the price path monotonically") {
    DetMarket m = paper_market();
    m.agent = kUnit;
    TimeGrid grid(24.0, 96);
    const auto pts = limit_checks(m, {1e2, 1e4, 1e6, 1e8}, grid);
    REQUIRE(pts.size() == 4);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        CHECK(pts[i].sup_price_slope < pts[i - 1].sup_price_slope);
        CHECK(pts[i].sup_price_deviation > pts[i - 1].sup_price_deviation);
    }
}

TEST_CASE("market validation") {
    DetMarket m = paper_market();
    m.C1 = 0.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = paper_market();
    m.agent.rho = 0.1;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = paper_market();
    m.agent.q0_bar = 1.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}
