#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "storeq/grid.hpp"

namespace storeq {

// A deterministic scalar curve on [0, T]: either a closed-form callable or a
// sampled vector with linear interpolation between grid points.
class Curve {
public:
    Curve() = default;

    static Curve from_function(std::function<double(double)> fn) {
        Curve c;
        c.fn_ = std::move(fn);
        return c;
    }

    static Curve from_samples(const TimeGrid& grid, std::vector<double> values) {
        if (values.size() != grid.size())
            throw std::invalid_argument("Curve: sample count does not match grid");
        Curve c;
        c.grid_horizon_ = grid.horizon();
        c.samples_ = std::move(values);
        return c;
    }

    static Curve constant(double value) {
        return from_function([value](double) { return value; });
    }

    // Sinusoid theta1 * sin(theta * t) + level.
    static Curve sinusoid(double theta1, double theta, double level) {
        return from_function([=](double t) { return theta1 * std::sin(theta * t) + level; });
    }

    bool empty() const { return !fn_ && samples_.empty(); }

    double operator()(double t) const {
        if (fn_) return fn_(t);
        if (samples_.empty()) throw std::logic_error("Curve: evaluating an empty curve");
        const std::size_t n = samples_.size() - 1;
        double x = t / grid_horizon_ * static_cast<double>(n);
        if (x <= 0.0) return samples_.front();
        if (x >= static_cast<double>(n)) return samples_.back();
        const std::size_t i = static_cast<std::size_t>(x);
        const double w = x - static_cast<double>(i);
        return (1.0 - w) * samples_[i] + w * samples_[i + 1];
    }

    std::vector<double> sample(const TimeGrid& grid) const {
        std::vector<double> out(grid.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)(grid.t(i));
        return out;
    }

private:
    std::function<double(double)> fn_;
    double grid_horizon_ = 0.0;
    std::vector<double> samples_;
};

// Price trajectory: grid plus per-step values (optionally backed by a
// closed-form curve so integrands can be evaluated between grid points).
struct PriceTrajectory {
    TimeGrid grid;
    Curve curve;

    PriceTrajectory(const TimeGrid& g, Curve c) : grid(g), curve(std::move(c)) {}
    PriceTrajectory(const TimeGrid& g, std::vector<double> values)
        : grid(g), curve(Curve::from_samples(g, std::move(values))) {}

    double at(double t) const { return curve(t); }
    std::vector<double> values() const { return curve.sample(grid); }
};

}  // namespace storeq
