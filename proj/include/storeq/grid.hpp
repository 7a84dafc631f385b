#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace storeq {

// Uniform grid on [0, T] with n steps (n + 1 points), times in hours.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        if (horizon <= 0.0) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
    }

    double horizon() const { return horizon_; }
    std::size_t steps() const { return steps_; }
    std::size_t size() const { return steps_ + 1; }
    double dt() const { return horizon_ / static_cast<double>(steps_); }
    double t(std::size_t i) const { return horizon_ * static_cast<double>(i) / static_cast<double>(steps_); }

    std::vector<double> times() const {
        std::vector<double> out(size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = t(i);
        return out;
    }

    bool operator==(const TimeGrid& other) const {
        return horizon_ == other.horizon_ && steps_ == other.steps_;
    }

private:
    double horizon_;
    std::size_t steps_;
};

}  // namespace storeq
