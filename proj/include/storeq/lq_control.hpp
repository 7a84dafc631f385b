#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "storeq/curves.hpp"
#include "storeq/grid.hpp"
#include "storeq/ou.hpp"
#include "storeq/rng.hpp"

namespace storeq {

// Compensated compound-Poisson perturbation of the storage level.
struct JumpSpec {
    double intensity = 0.0;  // jumps per hour
    double mark_mean = 0.0;  // MWh
    double mark_std = 0.0;   // MWh, Gaussian marks
};

// One storage agent: quadratic discharge cost, holding cost and terminal
// penalty, Brownian exposure, optional external supply and jump noise.
struct AgentParams {
    double alpha;         // cost curvature (EUR h / MWh^2)
    double beta;          // holding-cost curvature (EUR / MWh^2 / h)
    double gamma;         // terminal-penalty curvature (EUR / MWh^2)
    double rho = 0.0;     // Brownian exposure (MWh / sqrt(h))
    double q0_bar = 0.0;  // reference storage level (MWh)
    std::optional<OUModel> kappa;    // external supply process (MW)
    std::optional<JumpSpec> jumps;

    void validate() const;
};

// Derived constants of the closed-form control: omega = sqrt(beta/alpha),
// u = (sqrt(alpha beta) - gamma) / (sqrt(alpha beta) + gamma).
struct ControlCoefficients {
    double omega;
    double u;
    double T;

    ControlCoefficients(const AgentParams& params, double horizon);
    ControlCoefficients(double alpha, double beta, double gamma, double horizon);
};

// f(t,T) = (1 - u e^{-2 omega (T-t)}) / (1 + u e^{-2 omega (T-t)}).
double f_factor(double t, double T, const ControlCoefficients& coeffs);

// f1(t,s,T) = omega (e^{-omega(s-t)} - u e^{-omega(2T-s-t)}) / (1 + u e^{-2 omega (T-t)}).
double f1_kernel(double t, double s, double T, const ControlCoefficients& coeffs);

// Riccati solution y_t = (sqrt(alpha beta)/2) f(t,T), with y_T = gamma/2.
double riccati_y(double t, const ControlCoefficients& coeffs, double alpha, double beta);

// Closed-loop feedback: q* = omega f(t,T) (Q - Q0_bar) - cond_exp_term + P/(2 alpha).
double optimal_control_step(double q_level, double price, double cond_exp_term, double t,
                            const AgentParams& params, const ControlCoefficients& coeffs);

// Precomputed conditional-expectation term
//   E[ int_t^T f1(t,s,T) (P_s/(2 alpha) - kappa_s) ds | F_t ]
// for a deterministic price curve. The price-dependent part is evaluated on a
// refined internal grid with exact exponential-kernel recursions; the
// fluctuation of a stochastic external supply around its mean enters through
// the closed-form kernel returned by kappa_loading().
class ConditionalTerm {
public:
    ConditionalTerm(const AgentParams& params, const PriceTrajectory& price,
                    std::size_t substeps = 8);

    // Deterministic part, using the unconditional mean of kappa.
    double deterministic(double t) const;
    // Coefficient of (kappa_t - E[kappa_t]) in the conditional expectation.
    double kappa_loading(double t) const;
    // Full term given the current kappa value (ignored without a kappa model).
    double value(double t, double kappa_t) const;

    const ControlCoefficients& coeffs() const { return coeffs_; }
    std::size_t fine_index(double t) const;
    double fine_dt() const { return fine_dt_; }

private:
    AgentParams params_;
    ControlCoefficients coeffs_;
    double horizon_;
    double fine_dt_;
    std::vector<double> ce_;  // deterministic part on the fine grid
};

struct AgentPath {
    std::vector<double> q;  // withdrawal rate (MW) at grid points
    std::vector<double> Q;  // state of charge (MWh) at grid points
};

struct SimulateOptions {
    std::size_t substeps = 8;       // internal refinement of the time grid
    std::uint64_t path_index = 0;   // path coordinate of the RNG streams
    std::uint64_t agent_stream = 0; // stream offset for multi-agent runs
};

// Forward simulation of the closed-loop optimal strategy. Deterministic
// (rho = 0, no jumps, sigma-free kappa) runs integrate the feedback ODE with
// a 4th-order scheme on the refined grid; noisy runs use Euler-Maruyama on
// the simulation grid with counter-based noise, so a fixed seed gives a
// bitwise-reproducible path.
AgentPath simulate_agent(const AgentParams& params, const PriceTrajectory& price,
                         const TimeGrid& grid, std::uint64_t rng_seed,
                         const SimulateOptions& options = {});

// Corollary aggregation: p identical agents (alpha, beta, gamma) behave as a
// single agent (alpha/p, beta/p, gamma/p) with rho_bar = sqrt(sum rho_i^2)
// and summed reference level. Fractional p supported for limit studies.
AgentParams aggregate_agents(double p, const AgentParams& base,
                             const std::vector<double>& rhos = {});

// Discretized control cost of a (q, Q) trajectory, the objective whose
// minimizer the closed loop realizes; used by optimality checks.
double control_cost(const AgentParams& params, const std::vector<double>& price_values,
                    const std::vector<double>& q, const std::vector<double>& Q,
                    const TimeGrid& grid);

}  // namespace storeq
