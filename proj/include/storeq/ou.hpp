#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "storeq/grid.hpp"

namespace storeq {

// Ornstein-Uhlenbeck model dX = -theta (X - mu) dt + sigma dW.
struct OUModel {
    double theta = 0.0;  // mean-reversion speed (1/h)
    double mu = 0.0;     // long-run mean (MW)
    double sigma = 0.0;  // diffusion scale (MW/sqrt(h))
    double x0 = 0.0;     // initial value (MW)

    void validate() const;

    // Conditional mean E[X_s | X_t = x], s >= t.
    double conditional_mean(double x, double horizon) const;
    // Variance of the exact transition over an interval dt.
    double transition_variance(double dt) const;
    double stationary_variance() const;
};

// 24 hourly means, piecewise constant on [h, h+1).
class SeasonalProfile {
public:
    SeasonalProfile() { slots_.fill(0.0); }
    explicit SeasonalProfile(const std::array<double, 24>& slots) : slots_(slots) {}

    double at(double t) const {
        int h = static_cast<int>(t) % 24;
        if (h < 0) h += 24;
        return slots_[static_cast<std::size_t>(h)];
    }
    double slot(std::size_t h) const { return slots_.at(h); }
    std::array<double, 24>& slots() { return slots_; }
    const std::array<double, 24>& slots() const { return slots_; }

private:
    std::array<double, 24> slots_;
};

// Matrix of simulated paths: `paths` rows, grid.size() columns, row-major.
struct PathSet {
    TimeGrid grid;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    std::string label;
    std::vector<double> values;

    PathSet(const TimeGrid& g, std::size_t n_paths, std::uint64_t master_seed, std::string name)
        : grid(g), paths(n_paths), seed(master_seed), label(std::move(name)),
          values(n_paths * g.size(), 0.0) {}

    double& at(std::size_t path, std::size_t step) { return values[path * grid.size() + step]; }
    double at(std::size_t path, std::size_t step) const { return values[path * grid.size() + step]; }
    double* row(std::size_t path) { return values.data() + path * grid.size(); }
    const double* row(std::size_t path) const { return values.data() + path * grid.size(); }
};

struct DeseasonalizeResult {
    SeasonalProfile profile;
    std::vector<double> residuals;
};

// Hour-of-day means over whole days; residual = data - profile.
// Data length must be a multiple of 24 unless allow_truncation is set.
DeseasonalizeResult deseasonalize(const std::vector<double>& hourly_data,
                                  bool allow_truncation = false);

struct OUFitDiagnostics {
    double ar_slope = 0.0;       // fitted AR(1) coefficient
    double ar_intercept = 0.0;
    std::size_t observations = 0;
    bool near_white_noise = false;  // theta * dt > 5
};

// Exact-discretization Gaussian MLE via the AR(1) closed form.
OUModel ou_mle_fit(const std::vector<double>& residuals, double dt,
                   OUFitDiagnostics* diagnostics = nullptr);

// Exact-transition simulation of profile + OU residual. Parallel over paths;
// output is identical for any thread count.
PathSet simulate_ou(const OUModel& model, const SeasonalProfile& profile, const TimeGrid& grid,
                    std::size_t n_paths, std::uint64_t seed,
                    std::uint64_t stream = 1);

// Plain single-threaded loop, kept as the reference implementation for the
// parallel kernel above.
PathSet simulate_ou_serial(const OUModel& model, const SeasonalProfile& profile,
                           const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                           std::uint64_t stream = 1);

}  // namespace storeq
