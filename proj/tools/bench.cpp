// Benchmark of the OpenMP path kernels against their serial reference
// implementations; also verifies that both produce bitwise-identical output.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "storeq/fbsde.hpp"
#include "storeq/grid.hpp"
#include "storeq/ou.hpp"

using namespace storeq;

namespace {

template <class F>
double timed(F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

StochMarket bench_market() {
    StochMarket m;
    m.C0 = -7546.0;
    m.C1 = 151.77;
    m.demand_profile = Curve::sinusoid(6862.5, M_PI / 6.0, 1500.0);
    m.demand_shock = OUModel{1.2, 0.0, 900.0, 0.0};
    m.renew_shock = OUModel{0.8, 0.0, 600.0, 0.0};
    m.agents.push_back(aggregate_agents(10000.0, AgentParams{84.0, 7.0, 500.0, 0.0, 0.0, {}, {}}));
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t paths = 4000;
    if (argc > 1) paths = static_cast<std::size_t>(std::atoll(argv[1]));
    std::printf("threads: %d, paths: %zu\n", omp_get_max_threads(), paths);

    {
        const OUModel model{1.2, 0.0, 900.0, 0.0};
        const TimeGrid grid(24.0, 960);
        PathSet par(grid, 0, 0, ""), ser(grid, 0, 0, "");
        const double tp = timed([&] { par = simulate_ou(model, {}, grid, 8 * paths, 42); });
        const double ts = timed([&] { ser = simulate_ou_serial(model, {}, grid, 8 * paths, 42); });
        std::printf("simulate_ou       %zu x %zu steps: parallel %.3f s, serial %.3f s, "
                    "speedup %.1fx, bitwise %s\n",
                    8 * paths, grid.steps(), tp, ts, ts / tp,
                    par.values == ser.values ? "identical" : "DIFFERENT");
    }

    {
        const StochMarket m = bench_market();
        const TimeGrid grid(24.0, 96);
        SolveOptions opt;
        opt.paths = paths;
        opt.seed = 7;
        FbsdeSolution par{grid}, ser{grid};
        const double tp = timed([&] { par = solve(m, grid, opt); });
        opt.parallel = false;
        const double ts = timed([&] { ser = solve(m, grid, opt); });
        std::printf("fbsde solve       %zu x %zu steps: parallel %.3f s, serial %.3f s, "
                    "speedup %.1fx, bitwise %s (%zu iterations)\n",
                    paths, grid.steps(), tp, ts, ts / tp,
                    par.price == ser.price && par.Y1 == ser.Y1 ? "identical" : "DIFFERENT",
                    par.iterations);
    }
    return 0;
}
