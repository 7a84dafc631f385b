#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "storeq/errors.hpp"
#include "storeq/ou.hpp"

using namespace storeq;

namespace {

std::vector<double> exact_ou_sample(const OUModel& m, double dt, std::size_t n,
                                    unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double a = std::exp(-m.theta * dt);
    const double sd = std::sqrt(m.transition_variance(dt));
    std::vector<double> x(n);
    x[0] = m.x0;
    for (std::size_t i = 1; i < n; ++i)
        x[i] = m.mu + a * (x[i - 1] - m.mu) + sd * gauss(rng);
    return x;
}

}  // namespace

TEST_CASE("model moments") {
    OUModel m{0.4, 10.0, 3.0, 2.0};
    CHECK(m.stationary_variance() == doctest::Approx(9.0 / 0.8).epsilon(1e-14));
    // transition variance interpolates between 0 and the stationary level
    CHECK(m.transition_variance(0.0) == doctest::Approx(0.0));
    CHECK(m.transition_variance(1e3) == doctest::Approx(m.stationary_variance()).epsilon(1e-12));
    CHECK(m.transition_variance(0.5) ==
          doctest::Approx(9.0 / 0.8 * (1.0 - std::exp(-0.4))).epsilon(1e-12));
    // conditional mean decays toward mu
    CHECK(m.conditional_mean(2.0, 0.0) == doctest::Approx(2.0));
    CHECK(m.conditional_mean(2.0, 1e3) == doctest::Approx(10.0));
    CHECK(m.conditional_mean(14.0, 1.0) ==
          doctest::Approx(10.0 + 4.0 * std::exp(-0.4)).epsilon(1e-14));
}

TEST_CASE("deseasonalize reconstructs the input and centers the residuals") {
    std::vector<double> data(24 * 30);
    std::mt19937 rng(3);
    std::normal_distribution<double> noise(0.0, 2.0);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = 50.0 + 8.0 * std::sin(2.0 * M_PI * static_cast<double>(i % 24) / 24.0) +
                  noise(rng);
    DeseasonalizeResult r = deseasonalize(data);
    REQUIRE(r.residuals.size() == data.size());
    std::array<double, 24> hour_sum{};
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(r.profile.at(static_cast<double>(i % 24)) + r.residuals[i] ==
              doctest::Approx(data[i]).epsilon(1e-12));
        hour_sum[i % 24] += r.residuals[i];
    }
    for (double s : hour_sum) CHECK(s == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("deseasonalize length handling") {
    std::vector<double> data(24 * 3 + 5, 1.0);
    CHECK_THROWS_AS(deseasonalize(data), DataError);
    DeseasonalizeResult r = deseasonalize(data, true);
    CHECK(r.residuals.size() == 24 * 3);
}

TEST_CASE("profile is 24 h periodic") {
    std::array<double, 24> slots{};
    for (std::size_t h = 0; h < 24; ++h) slots[h] = static_cast<double>(h) * 1.5;
    SeasonalProfile p(slots);
    CHECK(p.at(3.0) == doctest::Approx(4.5));
    CHECK(p.at(27.0) == doctest::Approx(4.5));
    CHECK(p.at(3.7) == doctest::Approx(4.5));  // piecewise constant on the hour
}

TEST_CASE("MLE round trip on an exactly discretized path") {
    OUModel truth{0.3, 50.0, 12.0, 50.0};
    std::vector<double> x = exact_ou_sample(truth, 1.0, 20000, 11);
    OUFitDiagnostics diag;
    OUModel fit = ou_mle_fit(x, 1.0, &diag);
    CHECK(fit.theta == doctest::Approx(truth.theta).epsilon(0.05));
    CHECK(fit.mu == doctest::Approx(truth.mu).epsilon(0.02));
    CHECK(fit.sigma == doctest::Approx(truth.sigma).epsilon(0.05));
    CHECK(fit.x0 == doctest::Approx(x.front()));
    CHECK(diag.observations == 20000);
    CHECK_FALSE(diag.near_white_noise);
}

TEST_CASE("identifiable functionals survive in the near-white-noise regime") {
    // theta dt = 8: the AR(1) slope e^{-8} is numerically indistinguishable
    // from zero, so theta and sigma are only jointly identified through the
    // stationary variance. The fit must flag this and still reproduce it.
    OUModel truth{8.0, 5.0, 40.0, 5.0};
    std::vector<double> x = exact_ou_sample(truth, 1.0, 40000, 23);
    OUFitDiagnostics diag;
    OUModel fit = ou_mle_fit(x, 1.0, &diag);
    CHECK(diag.near_white_noise);
    CHECK(fit.mu == doctest::Approx(truth.mu).epsilon(0.05));
    CHECK(fit.stationary_variance() ==
          doctest::Approx(truth.stationary_variance()).epsilon(0.05));
}

TEST_CASE("explosive data is rejected as non-stationary") {
    // geometric growth has an AR(1) slope above one
    std::vector<double> x(2000);
    double v = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = v;
        v *= 1.01;
    }
    CHECK_THROWS_AS(ou_mle_fit(x, 1.0), NonStationaryFitError);
}

TEST_CASE("simulated transitions have the exact conditional moments") {
    OUModel m{0.7, 20.0, 5.0, 26.0};
    TimeGrid grid(24.0, 48);
    SeasonalProfile flat;
    PathSet paths = simulate_ou(m, flat, grid, 20000, 5);
    // one-step increments from the initial point: X_1 | X_0 = x0 is Gaussian
    double mean = 0.0, var = 0.0;
    for (std::size_t p = 0; p < paths.paths; ++p) mean += paths.at(p, 1);
    mean /= static_cast<double>(paths.paths);
    for (std::size_t p = 0; p < paths.paths; ++p) {
        const double d = paths.at(p, 1) - mean;
        var += d * d;
    }
    var /= static_cast<double>(paths.paths - 1);
    CHECK(mean == doctest::Approx(m.conditional_mean(m.x0, grid.dt())).epsilon(2e-3));
    CHECK(var == doctest::Approx(m.transition_variance(grid.dt())).epsilon(0.05));
    // all paths start at x0 plus the profile
    for (std::size_t p = 0; p < paths.paths; p += 997) CHECK(paths.at(p, 0) == 26.0);
}

TEST_CASE("long-run sample variance approaches the stationary value") {
    OUModel m{1.5, 0.0, 2.0, 0.0};
    TimeGrid grid(96.0, 192);
    PathSet paths = simulate_ou(m, SeasonalProfile{}, grid, 4000, 77);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < paths.paths; ++p) {
        const double v = paths.at(p, grid.steps());
        acc += v * v;
        ++n;
    }
    CHECK(acc / static_cast<double>(n) ==
          doctest::Approx(m.stationary_variance()).epsilon(0.05));
}

TEST_CASE("profile shifts the simulated mean") {
    OUModel m{0.5, 0.0, 0.0, 0.0};  // noise-free: paths follow the profile exactly
    std::array<double, 24> slots{};
    for (std::size_t h = 0; h < 24; ++h) slots[h] = 100.0 + static_cast<double>(h);
    TimeGrid grid(24.0, 24);
    PathSet paths = simulate_ou(m, SeasonalProfile(slots), grid, 3, 1);
    for (std::size_t i = 0; i < 24; ++i)
        CHECK(paths.at(1, i) == doctest::Approx(slots[i]).epsilon(1e-12));
}

TEST_CASE("parallel and serial kernels agree bitwise") {
    OUModel m{0.9, 3.0, 7.0, 4.0};
    std::array<double, 24> slots{};
    slots.fill(2.0);
    TimeGrid grid(24.0, 96);
    PathSet a = simulate_ou(m, SeasonalProfile(slots), grid, 501, 13, 4);
    PathSet b = simulate_ou_serial(m, SeasonalProfile(slots), grid, 501, 13, 4);
    CHECK(a.values == b.values);
}

TEST_CASE("seed and stream address the noise deterministically") {
    OUModel m{0.9, 3.0, 7.0, 4.0};
    TimeGrid grid(24.0, 48);
    PathSet a = simulate_ou(m, {}, grid, 16, 13, 4);
    PathSet b = simulate_ou(m, {}, grid, 16, 13, 4);
    PathSet c = simulate_ou(m, {}, grid, 16, 14, 4);
    PathSet d = simulate_ou(m, {}, grid, 16, 13, 5);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    CHECK(a.values != d.values);
}

TEST_CASE("model validation") {
    OUModel bad{-0.1, 0.0, 1.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    OUModel bad2{0.1, 0.0, -1.0, 0.0};
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
