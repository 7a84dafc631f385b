#pragma once

#include <cmath>
#include <cstdint>

namespace storeq {

// Counter-based random streams. Every variate is a pure function of
// (master seed, stream id, path index, step counter), so path simulation can
// be parallelized over any schedule without changing the output.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix4(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    std::uint64_t h = splitmix64(a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    h = splitmix64(h ^ d);
    return h;
}

// uniform in (0,1), never exactly 0 or 1
inline double u01(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// One standard normal variate for the given coordinates.
inline double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
                          std::uint64_t step) {
    const std::uint64_t h1 = detail::mix4(seed, stream, path, 2 * step);
    const std::uint64_t h2 = detail::mix4(seed, stream, path, 2 * step + 1);
    const double u1 = detail::u01(h1);
    const double u2 = detail::u01(h2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// One uniform (0,1) variate for the given coordinates.
inline double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t path,
                           std::uint64_t step) {
    return detail::u01(detail::mix4(seed, stream, path, step));
}

// Sequential counter-based stream, convenient when a consumer needs an
// unbounded number of draws (e.g. compound Poisson sampling).
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t path)
        : seed_(seed), stream_(stream), path_(path) {}

    double next_uniform() { return uniform_draw(seed_, stream_, path_, counter_++); }

    double next_normal() {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t path_;
    std::uint64_t counter_ = 0;
};

// Stream id allocation, kept in one place so experiments never collide.
namespace streams {
inline constexpr std::uint64_t kDemand = 1;
inline constexpr std::uint64_t kRenewables = 2;
inline constexpr std::uint64_t kAgentBrownian = 100;  // + agent index
inline constexpr std::uint64_t kAgentSupply = 200;    // + agent index
inline constexpr std::uint64_t kAgentJumps = 300;     // + agent index
}  // namespace streams

}  // namespace storeq
