#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace storeq {

// Composite Simpson rule over uniformly spaced samples. Accepts any number
// of panels; an odd interval count is handled with a 3/8 rule on the tail.
inline double simpson(const std::vector<double>& values, double dt) {
    const std::size_t n = values.size();
    if (n == 0) throw std::invalid_argument("simpson: empty sample vector");
    if (n == 1) return 0.0;
    if (n == 2) return 0.5 * dt * (values[0] + values[1]);
    std::size_t m = n - 1;  // interval count
    double total = 0.0;
    std::size_t start = 0;
    if (m % 2 == 1) {
        // 3/8 rule on the first three intervals
        if (m < 3) {
            return 0.5 * dt * (values[0] + values[1]) + 0.5 * dt * (values[1] + values[2]);
        }
        total += 3.0 * dt / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]);
        start = 3;
    }
    for (std::size_t i = start; i + 2 <= n - 1; i += 2) {
        total += dt / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
    }
    return total;
}

// 4-point Gauss-Legendre panel on [a, b].
inline double gauss4(const std::function<double(double)>& f, double a, double b) {
    static constexpr std::array<double, 4> x = {-0.861136311594052575224, -0.339981043584856264803,
                                                0.339981043584856264803, 0.861136311594052575224};
    static constexpr std::array<double, 4> w = {0.347854845137453857373, 0.652145154862546142627,
                                                0.652145154862546142627, 0.347854845137453857373};
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double total = 0.0;
    for (int i = 0; i < 4; ++i) total += w[i] * f(mid + half * x[i]);
    return half * total;
}

// Composite 4-point Gauss-Legendre with `panels` subdivisions of [a, b].
inline double gauss4_composite(const std::function<double(double)>& f, double a, double b,
                               std::size_t panels) {
    double total = 0.0;
    const double h = (b - a) / static_cast<double>(panels);
    for (std::size_t i = 0; i < panels; ++i) {
        total += gauss4(f, a + h * static_cast<double>(i), a + h * static_cast<double>(i + 1));
    }
    return total;
}

}  // namespace storeq
