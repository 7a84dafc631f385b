#include "storeq/ou.hpp"

#include <cmath>
#include <sstream>

#include "storeq/errors.hpp"
#include "storeq/rng.hpp"

namespace storeq {

void OUModel::validate() const {
    if (theta < 0.0) throw ConfigError("OUModel: theta must be non-negative");
    if (sigma < 0.0) throw ConfigError("OUModel: sigma must be non-negative");
    if (!std::isfinite(mu) || !std::isfinite(x0))
        throw ConfigError("OUModel: mu and x0 must be finite");
}

double OUModel::conditional_mean(double x, double horizon) const {
    return mu + (x - mu) * std::exp(-theta * horizon);
}

double OUModel::transition_variance(double dt) const {
    // sigma^2 (1 - e^{-2 theta dt}) / (2 theta), continuous at theta = 0
    if (theta * dt < 1e-12) return sigma * sigma * dt;
    return sigma * sigma * (-std::expm1(-2.0 * theta * dt)) / (2.0 * theta);
}

double OUModel::stationary_variance() const {
    if (theta <= 0.0) throw ConfigError("OUModel: stationary variance requires theta > 0");
    return sigma * sigma / (2.0 * theta);
}

DeseasonalizeResult deseasonalize(const std::vector<double>& hourly_data, bool allow_truncation) {
    std::size_t n = hourly_data.size();
    if (n % 24 != 0) {
        if (!allow_truncation) {
            std::ostringstream msg;
            msg << "deseasonalize: data length " << n << " is not a multiple of 24"
                << " (pass allow_truncation to drop the trailing partial day)";
            throw DataError(msg.str());
        }
        n -= n % 24;
    }
    if (n == 0) throw DataError("deseasonalize: no full day of data");

    const std::size_t days = n / 24;
    DeseasonalizeResult out;
    for (std::size_t h = 0; h < 24; ++h) {
        double sum = 0.0;
        for (std::size_t d = 0; d < days; ++d) sum += hourly_data[d * 24 + h];
        out.profile.slots()[h] = sum / static_cast<double>(days);
    }
    out.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.residuals[i] = hourly_data[i] - out.profile.slot(i % 24);
    return out;
}

OUModel ou_mle_fit(const std::vector<double>& residuals, double dt, OUFitDiagnostics* diagnostics) {
    if (residuals.size() < 3) throw DataError("ou_mle_fit: need at least 3 observations");
    if (dt <= 0.0) throw ConfigError("ou_mle_fit: dt must be positive");

    // AR(1) regression X_{k+1} = a X_k + b + eps, OLS closed form.
    const std::size_t n = residuals.size() - 1;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = residuals[k];
        const double y = residuals[k + 1];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nn = static_cast<double>(n);
    const double denom = nn * sxx - sx * sx;
    if (std::abs(denom) < 1e-300)
        throw NonStationaryFitError("ou_mle_fit: degenerate series (zero variance)", 0.0);
    const double a = (nn * sxy - sx * sy) / denom;
    const double b = (sy - a * sx) / nn;

    if (diagnostics) {
        diagnostics->ar_slope = a;
        diagnostics->ar_intercept = b;
        diagnostics->observations = residuals.size();
    }
    if (a <= 0.0 || a >= 1.0) {
        std::ostringstream msg;
        msg << "ou_mle_fit: AR(1) slope " << a << " outside (0,1); no stationary OU fit";
        throw NonStationaryFitError(msg.str(), a);
    }

    double rss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double eps = residuals[k + 1] - a * residuals[k] - b;
        rss += eps * eps;
    }
    const double eps_var = rss / nn;

    OUModel model;
    model.theta = -std::log(a) / dt;
    model.mu = b / (1.0 - a);
    // eps_var = sigma^2 (1 - a^2) / (2 theta)
    model.sigma = std::sqrt(eps_var * 2.0 * model.theta / (1.0 - a * a));
    model.x0 = residuals.front();
    if (diagnostics) diagnostics->near_white_noise = model.theta * dt > 5.0;
    return model;
}

namespace {

inline void simulate_one_path(const OUModel& model, const SeasonalProfile& profile,
                              const TimeGrid& grid, std::uint64_t seed, std::uint64_t stream,
                              std::size_t path, double decay, double step_std, double* out) {
    double x = model.x0;
    out[0] = x + profile.at(grid.t(0));
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double z = normal_draw(seed, stream, path, i - 1);
        x = model.mu + (x - model.mu) * decay + step_std * z;
        out[i] = x + profile.at(grid.t(i));
    }
}

}  // namespace

PathSet simulate_ou(const OUModel& model, const SeasonalProfile& profile, const TimeGrid& grid,
                    std::size_t n_paths, std::uint64_t seed, std::uint64_t stream) {
    model.validate();
    if (n_paths == 0) throw ConfigError("simulate_ou: path count must be positive");
    PathSet out(grid, n_paths, seed, "ou");
    const double decay = std::exp(-model.theta * grid.dt());
    const double step_std = std::sqrt(model.transition_variance(grid.dt()));
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(n_paths); ++p) {
        simulate_one_path(model, profile, grid, seed, stream, static_cast<std::size_t>(p), decay,
                          step_std, out.row(static_cast<std::size_t>(p)));
    }
    return out;
}

PathSet simulate_ou_serial(const OUModel& model, const SeasonalProfile& profile,
                           const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                           std::uint64_t stream) {
    model.validate();
    if (n_paths == 0) throw ConfigError("simulate_ou: path count must be positive");
    PathSet out(grid, n_paths, seed, "ou");
    const double decay = std::exp(-model.theta * grid.dt());
    const double step_std = std::sqrt(model.transition_variance(grid.dt()));
    for (std::size_t p = 0; p < n_paths; ++p) {
        simulate_one_path(model, profile, grid, seed, stream, p, decay, step_std, out.row(p));
    }
    return out;
}

}  // namespace storeq
