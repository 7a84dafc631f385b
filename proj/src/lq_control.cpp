#include "storeq/lq_control.hpp"

#include <cmath>
#include <stdexcept>

#include "storeq/errors.hpp"
#include "storeq/quadrature.hpp"

namespace storeq {

void AgentParams::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("AgentParams: alpha must be positive");
    if (!(beta > 0.0)) throw ConfigError("AgentParams: beta must be positive");
    if (!(gamma > 0.0)) throw ConfigError("AgentParams: gamma must be positive");
    if (!std::isfinite(rho)) throw ConfigError("AgentParams: rho must be finite");
    if (!std::isfinite(q0_bar)) throw ConfigError("AgentParams: q0_bar must be finite");
    if (kappa) kappa->validate();
    if (jumps && jumps->intensity < 0.0)
        throw ConfigError("AgentParams: jump intensity must be non-negative");
}

ControlCoefficients::ControlCoefficients(double alpha, double beta, double gamma, double horizon)
    : omega(std::sqrt(beta / alpha)),
      u((std::sqrt(alpha * beta) - gamma) / (std::sqrt(alpha * beta) + gamma)),
      T(horizon) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0))
        throw ConfigError("ControlCoefficients: alpha, beta, gamma must be positive");
    if (omega * horizon > 300.0)
        throw ConfigError("ControlCoefficients: omega * T too large for kernel evaluation");
}

ControlCoefficients::ControlCoefficients(const AgentParams& params, double horizon)
    : ControlCoefficients(params.alpha, params.beta, params.gamma, horizon) {}

namespace {

// 1 + u e^{-2 omega (T-t)}, written so no cancellation occurs as u -> -1.
inline double f_denominator(double t, double T, const ControlCoefficients& c) {
    return (1.0 + c.u) + c.u * std::expm1(-2.0 * c.omega * (T - t));
}

inline void check_time(double t, double T, const char* where) {
    // allow roundoff overshoot from accumulated fine-grid times
    if (t < -1e-9 * T || t > T * (1.0 + 1e-9))
        throw std::domain_error(std::string(where) + ": t outside [0, T]");
}

}  // namespace

double f_factor(double t, double T, const ControlCoefficients& coeffs) {
    check_time(t, T, "f_factor");
    // 1 - u e^{-2 omega (T-t)} with the near-terminal cancellation moved into expm1
    const double num = (1.0 - coeffs.u) - coeffs.u * std::expm1(-2.0 * coeffs.omega * (T - t));
    return num / f_denominator(t, T, coeffs);
}

double f1_kernel(double t, double s, double T, const ControlCoefficients& coeffs) {
    check_time(t, T, "f1_kernel");
    if (s < t || s > T) throw std::domain_error("f1_kernel: s outside [t, T]");
    const double num =
        std::exp(-coeffs.omega * (s - t)) - coeffs.u * std::exp(-coeffs.omega * (2.0 * T - s - t));
    return coeffs.omega * num / f_denominator(t, T, coeffs);
}

double riccati_y(double t, const ControlCoefficients& coeffs, double alpha, double beta) {
    return 0.5 * std::sqrt(alpha * beta) * f_factor(t, coeffs.T, coeffs);
}

double optimal_control_step(double q_level, double price, double cond_exp_term, double t,
                            const AgentParams& params, const ControlCoefficients& coeffs) {
    return coeffs.omega * f_factor(t, coeffs.T, coeffs) * (q_level - params.q0_bar) -
           cond_exp_term + price / (2.0 * params.alpha);
}

ConditionalTerm::ConditionalTerm(const AgentParams& params, const PriceTrajectory& price,
                                 std::size_t substeps)
    : params_(params),
      coeffs_(params, price.grid.horizon()),
      horizon_(price.grid.horizon()) {
    if (substeps < 1) substeps = 1;
    const std::size_t fine_n = price.grid.steps() * substeps * 2;
    fine_dt_ = horizon_ / static_cast<double>(fine_n);

    const double inv2a = 1.0 / (2.0 * params_.alpha);
    auto integrand = [&](double s) {
        double g = price.at(s) * inv2a;
        if (params_.kappa) {
            const auto& k = *params_.kappa;
            g -= k.mu + (k.x0 - k.mu) * std::exp(-k.theta * s);
        }
        return g;
    };

    // Backward recursions of the two exponential moments of the integrand,
    // in shifted form so every exponent is non-positive:
    //   I1(t) = int_t^T e^{-omega (s-t)} g(s) ds
    //   I2(t) = int_t^T e^{-omega (T-s)} g(s) ds
    const double om = coeffs_.omega;
    std::vector<double> i1(fine_n + 1, 0.0), i2(fine_n + 1, 0.0);
    for (std::size_t k = fine_n; k-- > 0;) {
        const double a = fine_dt_ * static_cast<double>(k);
        const double b = a + fine_dt_;
        i1[k] = std::exp(-om * fine_dt_) * i1[k + 1] +
                gauss4([&](double s) { return std::exp(-om * (s - a)) * integrand(s); }, a, b);
        i2[k] = i2[k + 1] +
                std::exp(-om * (horizon_ - b)) *
                    gauss4([&](double s) { return std::exp(-om * (b - s)) * integrand(s); }, a, b);
    }
    ce_.resize(fine_n + 1);
    for (std::size_t k = 0; k <= fine_n; ++k) {
        const double t = fine_dt_ * static_cast<double>(k);
        const double denom = f_denominator(t, horizon_, coeffs_);
        ce_[k] = om * (i1[k] - coeffs_.u * std::exp(-om * (horizon_ - t)) * i2[k]) / denom;
    }
}

std::size_t ConditionalTerm::fine_index(double t) const {
    const double x = t / fine_dt_;
    const auto k = static_cast<std::size_t>(x + 0.5);
    return k >= ce_.size() ? ce_.size() - 1 : k;
}

double ConditionalTerm::deterministic(double t) const {
    const double x = t / fine_dt_;
    if (x <= 0.0) return ce_.front();
    if (x >= static_cast<double>(ce_.size() - 1)) return ce_.back();
    const auto k = static_cast<std::size_t>(x);
    const double w = x - static_cast<double>(k);
    if (w < 1e-9) return ce_[k];
    if (w > 1.0 - 1e-9) return ce_[k + 1];
    return (1.0 - w) * ce_[k] + w * ce_[k + 1];
}

double ConditionalTerm::kappa_loading(double t) const {
    if (!params_.kappa) return 0.0;
    const double om = coeffs_.omega;
    const double th = params_.kappa->theta;
    const double tau = horizon_ - t;
    // int_t^T f1(t,s,T) e^{-theta (s-t)} ds in closed form
    const double first = -std::expm1(-(om + th) * tau) / (om + th);
    double second;
    if (std::abs(om - th) < 1e-10) {
        second = std::exp(-2.0 * om * tau) * tau;
    } else {
        second = std::exp(-2.0 * om * tau) * std::expm1((om - th) * tau) / (om - th);
    }
    return om * (first - coeffs_.u * second) / f_denominator(t, horizon_, coeffs_);
}

double ConditionalTerm::value(double t, double kappa_t) const {
    double out = deterministic(t);
    if (params_.kappa) {
        const auto& k = *params_.kappa;
        const double mean_t = k.mu + (k.x0 - k.mu) * std::exp(-k.theta * t);
        out -= (kappa_t - mean_t) * kappa_loading(t);
    }
    return out;
}

namespace {

AgentPath simulate_deterministic(const AgentParams& params, const PriceTrajectory& price,
                                 const TimeGrid& grid, const ConditionalTerm& ce) {
    const ControlCoefficients& c = ce.coeffs();
    const double T = grid.horizon();
    const double inv2a = 1.0 / (2.0 * params.alpha);

    auto kappa_mean = [&](double t) {
        if (!params.kappa) return 0.0;
        const auto& k = *params.kappa;
        return k.mu + (k.x0 - k.mu) * std::exp(-k.theta * t);
    };
    // dQ/dt = -omega f(t) (Q - Q0_bar) + CE(t) - P(t)/(2 alpha) + kappa(t)
    auto drift = [&](double t, double q_level) {
        return -c.omega * f_factor(t, T, c) * (q_level - params.q0_bar) + ce.deterministic(t) -
               price.at(t) * inv2a + kappa_mean(t);
    };

    const std::size_t fine_steps = (ce.fine_index(T)) / 2;  // RK4 steps of size 2 * fine_dt
    const double h = 2.0 * ce.fine_dt();
    AgentPath out;
    out.q.resize(grid.size());
    out.Q.resize(grid.size());
    double q_level = params.q0_bar;
    const std::size_t per_coarse = fine_steps / grid.steps();
    std::size_t next_coarse = 0;
    for (std::size_t k = 0; k <= fine_steps; ++k) {
        if (k == next_coarse * per_coarse) {
            const double t = grid.t(next_coarse);
            out.Q[next_coarse] = q_level;
            out.q[next_coarse] = optimal_control_step(q_level, price.at(t),
                                                      ce.deterministic(t), t, params, c);
            ++next_coarse;
        }
        if (k == fine_steps) break;
        const double t = h * static_cast<double>(k);
        const double k1 = drift(t, q_level);
        const double k2 = drift(t + 0.5 * h, q_level + 0.5 * h * k1);
        const double k3 = drift(t + 0.5 * h, q_level + 0.5 * h * k2);
        const double k4 = drift(t + h, q_level + h * k3);
        q_level += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return out;
}

AgentPath simulate_noisy(const AgentParams& params, const PriceTrajectory& price,
                         const TimeGrid& grid, const ConditionalTerm& ce, std::uint64_t seed,
                         const SimulateOptions& options) {
    const ControlCoefficients& c = ce.coeffs();
    const double h = grid.dt();
    const double sqrt_h = std::sqrt(h);
    AgentPath out;
    out.q.resize(grid.size());
    out.Q.resize(grid.size());

    double kappa_val = params.kappa ? params.kappa->x0 : 0.0;
    const double kappa_decay = params.kappa ? std::exp(-params.kappa->theta * h) : 1.0;
    const double kappa_std = params.kappa ? std::sqrt(params.kappa->transition_variance(h)) : 0.0;
    RngStream jump_stream(seed, streams::kAgentJumps + options.agent_stream, options.path_index);

    double q_level = params.q0_bar;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.t(i);
        out.Q[i] = q_level;
        out.q[i] = optimal_control_step(q_level, price.at(t), ce.value(t, kappa_val), t, params, c);
        if (i == grid.steps()) break;

        double dq = (-out.q[i] + kappa_val) * h;
        if (params.rho != 0.0) {
            dq += params.rho * sqrt_h *
                  normal_draw(seed, streams::kAgentBrownian + options.agent_stream,
                              options.path_index, i);
        }
        if (params.jumps && params.jumps->intensity > 0.0) {
            // Knuth sampling of the Poisson count, then Gaussian marks,
            // compensated by intensity * mean(mark) * dt.
            const double limit = std::exp(-params.jumps->intensity * h);
            double prod = jump_stream.next_uniform();
            while (prod > limit) {
                dq += params.jumps->mark_mean + params.jumps->mark_std * jump_stream.next_normal();
                prod *= jump_stream.next_uniform();
            }
            dq -= params.jumps->intensity * params.jumps->mark_mean * h;
        }
        q_level += dq;
        if (params.kappa) {
            const double z = normal_draw(seed, streams::kAgentSupply + options.agent_stream,
                                         options.path_index, i);
            kappa_val = params.kappa->mu + (kappa_val - params.kappa->mu) * kappa_decay +
                        kappa_std * z;
        }
    }
    return out;
}

}  // namespace

AgentPath simulate_agent(const AgentParams& params, const PriceTrajectory& price,
                         const TimeGrid& grid, std::uint64_t rng_seed,
                         const SimulateOptions& options) {
    params.validate();
    if (grid.size() < 2) throw ConfigError("simulate_agent: grid needs at least 2 points");
    if (!(price.grid == grid))
        throw ConfigError("simulate_agent: price not defined on the simulation grid");

    ConditionalTerm ce(params, price, options.substeps);
    const bool deterministic =
        params.rho == 0.0 && !params.jumps && (!params.kappa || params.kappa->sigma == 0.0);
    if (deterministic) return simulate_deterministic(params, price, grid, ce);
    return simulate_noisy(params, price, grid, ce, rng_seed, options);
}

AgentParams aggregate_agents(double p, const AgentParams& base, const std::vector<double>& rhos) {
    if (!(p > 0.0)) throw ConfigError("aggregate_agents: p must be positive");
    base.validate();
    AgentParams out = base;
    out.alpha = base.alpha / p;
    out.beta = base.beta / p;
    out.gamma = base.gamma / p;
    out.q0_bar = base.q0_bar * p;
    if (rhos.empty()) {
        out.rho = base.rho * std::sqrt(p);
    } else {
        double sum_sq = 0.0;
        for (double r : rhos) sum_sq += r * r;
        out.rho = std::sqrt(sum_sq);
    }
    return out;
}

double control_cost(const AgentParams& params, const std::vector<double>& price_values,
                    const std::vector<double>& q, const std::vector<double>& Q,
                    const TimeGrid& grid) {
    if (price_values.size() != grid.size() || q.size() != grid.size() || Q.size() != grid.size())
        throw ConfigError("control_cost: trajectory lengths do not match the grid");
    const double h = grid.dt();
    double cost = 0.0;
    for (std::size_t i = 0; i < grid.steps(); ++i) {
        const double dq = Q[i] - params.q0_bar;
        cost += h * (-price_values[i] * q[i] + params.alpha * q[i] * q[i] +
                     params.beta * dq * dq);
    }
    const double dT = Q[grid.steps()] - params.q0_bar;
    cost += params.gamma * dT * dT;
    return cost;
}

}  // namespace storeq
