#include "storeq/fbsde.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include <Eigen/Dense>

#include "storeq/errors.hpp"
#include "storeq/rng.hpp"

namespace storeq {

void StochMarket::validate() const {
    if (!(C1 > 0.0)) throw ConfigError("StochMarket: C1 must be positive");
    if (!(P_low < P_high)) throw ConfigError("StochMarket: price caps must satisfy P_low < P_high");
    if (demand_profile.empty()) throw ConfigError("StochMarket: demand profile missing");
    if (!(demand_scale > 0.0) || !(renew_scale >= 0.0))
        throw ConfigError("StochMarket: scenario multipliers out of range");
    if (demand_shock) demand_shock->validate();
    if (renew_shock) renew_shock->validate();
    for (const AgentParams& a : agents) {
        a.validate();
        if (a.jumps)
            throw ConfigError("StochMarket: jump noise is not supported in the equilibrium model");
    }
}

double StochMarket::inverse_supply_slope() const {
    double slope = C1;
    for (const AgentParams& a : agents) slope += 1.0 / (2.0 * a.alpha);
    return slope;
}

bool StochMarket::has_noise() const {
    if (demand_shock && demand_shock->sigma > 0.0) return true;
    if (renew_shock && renew_shock->sigma > 0.0) return true;
    for (const AgentParams& a : agents) {
        if (a.rho != 0.0) return true;
        if (a.kappa && a.kappa->sigma > 0.0) return true;
    }
    return false;
}

BackwardCoefficients::BackwardCoefficients(const std::vector<AgentParams>& agents,
                                           const TimeGrid& grid) {
    const std::size_t S = grid.size();
    const double T = grid.horizon();
    n_steps_plus_1 = S;
    omega.resize(agents.size());
    u.resize(agents.size());
    f.resize(agents.size() * S);
    F1.resize(agents.size() * S);
    F2.resize(agents.size() * S);
    for (std::size_t j = 0; j < agents.size(); ++j) {
        const ControlCoefficients c(agents[j], T);
        omega[j] = c.omega;
        u[j] = c.u;
        for (std::size_t i = 0; i < S; ++i) {
            const double t = grid.t(i);
            const double denom = 1.0 + c.u * std::exp(-2.0 * c.omega * (T - t));
            f[j * S + i] = f_factor(t, T, c);
            F1[j * S + i] = c.omega * std::exp(c.omega * t) / denom;
            F2[j * S + i] = c.u * c.omega * std::exp(-c.omega * (2.0 * T - t)) / denom;
        }
    }
}

namespace {

// All exponents (e_1, ..., e_k) with sum <= degree; the constant comes first.
std::vector<std::vector<int>> monomial_powers(std::size_t k, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(k, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int remaining) {
        if (pos == k) {
            out.push_back(cur);
            return;
        }
        for (int e = 0; e <= remaining; ++e) {
            cur[pos] = e;
            rec(pos + 1, remaining - e);
        }
        cur[pos] = 0;
    };
    rec(0, degree);
    std::sort(out.begin(), out.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
        int sa = 0, sb = 0;
        for (int e : a) sa += e;
        for (int e : b) sb += e;
        if (sa != sb) return sa < sb;
        return a < b;
    });
    return out;
}

// Per-step regression basis: standardized monomials in the state components
// that actually vary across paths. Components that are constant at a step
// (e.g. every state at t = 0) are dropped, leaving at least the constant.
struct StepBasis {
    std::vector<std::size_t> comp;
    std::vector<double> mean;
    std::vector<double> inv_std;
    std::vector<double> z_lo, z_hi;  // standardized range of the fitting sample
    std::vector<std::vector<int>> powers;

    std::size_t size() const { return powers.size(); }

    // States outside the fitting cloud are clamped to its hull: the regression
    // only describes the field there, and polynomial extrapolation destabilizes
    // the Picard iteration when the state distribution shifts between passes.
    void eval(const double* state, double* phi) const {
        const std::size_t k = comp.size();
        double z[16];
        for (std::size_t c = 0; c < k; ++c)
            z[c] = std::clamp((state[comp[c]] - mean[c]) * inv_std[c], z_lo[c], z_hi[c]);
        for (std::size_t b = 0; b < powers.size(); ++b) {
            double v = 1.0;
            const std::vector<int>& pw = powers[b];
            for (std::size_t c = 0; c < k; ++c)
                for (int e = 0; e < pw[c]; ++e) v *= z[c];
            phi[b] = v;
        }
    }
};

StepBasis build_basis(const std::vector<double>& states, std::size_t paths, std::size_t k_all,
                      int degree, std::size_t step) {
    StepBasis b;
    for (std::size_t c = 0; c < k_all; ++c) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t p = 0; p < paths; ++p) sum += states[p * k_all + c];
        const double m = sum / static_cast<double>(paths);
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = states[p * k_all + c] - m;
            sum2 += d * d;
        }
        const double sd = std::sqrt(sum2 / static_cast<double>(paths));
        if (sd > 1e-10 * (1.0 + std::abs(m))) {
            b.comp.push_back(c);
            b.mean.push_back(m);
            b.inv_std.push_back(1.0 / sd);
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t p = 0; p < paths; ++p) {
                const double z = (states[p * k_all + c] - m) / sd;
                lo = std::min(lo, z);
                hi = std::max(hi, z);
            }
            b.z_lo.push_back(lo);
            b.z_hi.push_back(hi);
        }
    }
    if (b.comp.size() > 16)
        throw ConfigError("solve: more than 16 varying state components is not supported");
    b.powers = monomial_powers(b.comp.size(), degree);
    if (b.size() > paths) {
        std::ostringstream msg;
        msg << "solve: " << b.size() << " basis functions but only " << paths
            << " paths at step " << step;
        throw BasisDegeneracyError(msg.str(), static_cast<int>(step));
    }
    return b;
}

// Regression coefficients per step for every agent's two backward components.
struct Field {
    std::vector<StepBasis> basis;          // [step], steps 0..N-1
    std::vector<std::vector<double>> c1;   // [step][agent * K + b]
    std::vector<std::vector<double>> c2;
    bool ready = false;
};

struct StateLayout {
    bool has_demand = false;
    bool has_renew = false;
    std::vector<bool> agent_kappa;
    std::size_t n_components = 0;
    std::size_t demand_idx = 0, renew_idx = 0;
    std::vector<std::size_t> q_idx, kappa_idx;
};

StateLayout make_layout(const StochMarket& market) {
    StateLayout lay;
    lay.has_demand = market.demand_shock.has_value();
    lay.has_renew = market.renew_shock.has_value();
    std::size_t idx = 0;
    if (lay.has_demand) lay.demand_idx = idx++;
    if (lay.has_renew) lay.renew_idx = idx++;
    for (const AgentParams& a : market.agents) {
        lay.agent_kappa.push_back(a.kappa.has_value());
        lay.q_idx.push_back(idx++);
        if (a.kappa) lay.kappa_idx.push_back(idx++);
        else lay.kappa_idx.push_back(static_cast<std::size_t>(-1));
    }
    lay.n_components = idx;
    return lay;
}

}  // namespace

double price_map(double t, const std::vector<double>& Q, const std::vector<double>& kappa,
                 double D, const std::vector<double>& Y1, const std::vector<double>& Y2,
                 const StochMarket& market, double horizon) {
    (void)kappa;  // enters only through the backward components and the dynamics
    const std::size_t nA = market.agents.size();
    if (Q.size() != nA || Y1.size() != nA || Y2.size() != nA)
        throw ConfigError("price_map: per-agent vectors have the wrong length");
    double arg = D;
    for (std::size_t j = 0; j < nA; ++j) {
        const AgentParams& a = market.agents[j];
        const ControlCoefficients c(a, horizon);
        const double denom = 1.0 + c.u * std::exp(-2.0 * c.omega * (horizon - t));
        const double f = f_factor(t, horizon, c);
        const double F1 = c.omega * std::exp(c.omega * t) / denom;
        const double F2 = c.u * c.omega * std::exp(-c.omega * (2.0 * horizon - t)) / denom;
        arg -= c.omega * f * (Q[j] - a.q0_bar) - F1 * Y1[j] + F2 * Y2[j];
    }
    const double p = (arg - market.C0) / market.inverse_supply_slope();
    return std::clamp(p, market.P_low, market.P_high);
}

FbsdeSolution solve(const StochMarket& market, const TimeGrid& grid, const SolveOptions& options) {
    market.validate();
    if (options.paths == 0) throw ConfigError("solve: path count must be positive");
    if (options.max_iterations == 0) throw ConfigError("solve: need at least one iteration");
    if (options.basis_degree < 1 || options.basis_degree > 4)
        throw ConfigError("solve: basis degree must be in [1, 4]");

    const std::size_t N = grid.steps();
    const std::size_t S = grid.size();
    const std::size_t L = options.paths;
    const std::size_t nA = market.agents.size();
    const double h = grid.dt();
    const double slope = market.inverse_supply_slope();

    const BackwardCoefficients ker(market.agents, grid);
    const StateLayout lay = make_layout(market);

    // Exogenous paths are fixed across Picard iterations.
    std::vector<double> profile_vals(S);
    for (std::size_t i = 0; i < S; ++i) profile_vals[i] = market.demand_profile(grid.t(i));

    std::vector<double> dshock, rshock;
    if (market.demand_shock) {
        dshock = simulate_ou(*market.demand_shock, SeasonalProfile{}, grid, L, options.seed,
                             streams::kDemand)
                     .values;
    }
    if (market.renew_shock) {
        rshock = simulate_ou(*market.renew_shock, SeasonalProfile{}, grid, L, options.seed,
                             streams::kRenewables)
                     .values;
    }
    std::vector<std::vector<double>> kpaths(nA);
    for (std::size_t j = 0; j < nA; ++j) {
        if (market.agents[j].kappa) {
            kpaths[j] = simulate_ou(*market.agents[j].kappa, SeasonalProfile{}, grid, L,
                                    options.seed, streams::kAgentSupply + j)
                            .values;
        }
    }

    std::vector<double> demand(L * S);
    for (std::size_t p = 0; p < L; ++p) {
        for (std::size_t i = 0; i < S; ++i) {
            double d = profile_vals[i];
            if (!dshock.empty()) d += dshock[p * S + i];
            d *= market.demand_scale;
            if (!rshock.empty()) d -= market.renew_scale * rshock[p * S + i];
            demand[p * S + i] = d;
        }
    }

    const std::size_t max_phi = monomial_powers(lay.n_components, options.basis_degree).size();

    auto gather_state = [&](std::size_t p, std::size_t i,
                            const std::vector<std::vector<double>>& Qp, double* state) {
        if (lay.has_demand) state[lay.demand_idx] = dshock[p * S + i];
        if (lay.has_renew) state[lay.renew_idx] = rshock[p * S + i];
        for (std::size_t j = 0; j < nA; ++j) {
            state[lay.q_idx[j]] = Qp[j][p * S + i];
            if (lay.agent_kappa[j]) state[lay.kappa_idx[j]] = kpaths[j][p * S + i];
        }
    };

    auto price_at = [&](std::size_t i, double D, const std::vector<std::vector<double>>& Qp,
                        std::size_t p, const double* y1, const double* y2) {
        double arg = D;
        for (std::size_t j = 0; j < nA; ++j) {
            arg -= ker.omega[j] * ker.f_at(j, i) * (Qp[j][p * S + i] - market.agents[j].q0_bar) -
                   ker.F1_at(j, i) * y1[j] + ker.F2_at(j, i) * y2[j];
        }
        return std::clamp((arg - market.C0) / slope, market.P_low, market.P_high);
    };

    auto eval_field = [&](const Field& field, std::size_t i, const double* state, double* phi,
                          double* y1, double* y2) {
        if (!field.ready || i >= N) {
            std::fill(y1, y1 + nA, 0.0);
            std::fill(y2, y2 + nA, 0.0);
            return;
        }
        const StepBasis& b = field.basis[i];
        const std::size_t K = b.size();
        b.eval(state, phi);
        for (std::size_t j = 0; j < nA; ++j) {
            double v1 = 0.0, v2 = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                v1 += field.c1[i][j * K + k] * phi[k];
                v2 += field.c2[i][j * K + k] * phi[k];
            }
            y1[j] = v1;
            y2[j] = v2;
        }
    };

    struct ForwardResult {
        std::vector<std::vector<double>> Q;   // per agent, L x S
        std::vector<double> P;                // L x S
        std::vector<std::vector<double>> Y1;  // field-evaluated along the run
        std::vector<std::vector<double>> Y2;
    };

    auto forward_pass = [&](const Field& field) {
        ForwardResult out;
        out.Q.assign(nA, std::vector<double>(L * S, 0.0));
        out.P.assign(L * S, 0.0);
        out.Y1.assign(nA, std::vector<double>(L * S, 0.0));
        out.Y2.assign(nA, std::vector<double>(L * S, 0.0));
        const double sqh = std::sqrt(h);
#pragma omp parallel for schedule(static) if (options.parallel)
        for (long long pp = 0; pp < static_cast<long long>(L); ++pp) {
            const std::size_t p = static_cast<std::size_t>(pp);
            std::vector<double> state(std::max<std::size_t>(lay.n_components, 1), 0.0);
            std::vector<double> phi(std::max<std::size_t>(max_phi, 1), 0.0);
            std::vector<double> y1(std::max<std::size_t>(nA, 1), 0.0);
            std::vector<double> y2(std::max<std::size_t>(nA, 1), 0.0);
            std::vector<double> drift(std::max<std::size_t>(nA, 1), 0.0);
            std::vector<double> noise(std::max<std::size_t>(nA, 1), 0.0);
            for (std::size_t j = 0; j < nA; ++j)
                out.Q[j][p * S + 0] = market.agents[j].q0_bar;
            for (std::size_t i = 0; i < S; ++i) {
                gather_state(p, i, out.Q, state.data());
                eval_field(field, i, state.data(), phi.data(), y1.data(), y2.data());
                const double P = price_at(i, demand[p * S + i], out.Q, p, y1.data(), y2.data());
                out.P[p * S + i] = P;
                for (std::size_t j = 0; j < nA; ++j) {
                    out.Y1[j][p * S + i] = y1[j];
                    out.Y2[j][p * S + i] = y2[j];
                }
                if (i == N) break;
                // Heun step: Euler predictor, drift re-evaluated at t_{i+1}
                // on the predicted state under the same field, then averaged.
                for (std::size_t j = 0; j < nA; ++j) {
                    const AgentParams& a = market.agents[j];
                    const double Qj = out.Q[j][p * S + i];
                    const double q = ker.omega[j] * ker.f_at(j, i) * (Qj - a.q0_bar) +
                                     P / (2.0 * a.alpha) - ker.F1_at(j, i) * y1[j] +
                                     ker.F2_at(j, i) * y2[j];
                    const double kap = lay.agent_kappa[j] ? kpaths[j][p * S + i] : 0.0;
                    drift[j] = kap - q;
                    noise[j] = a.rho != 0.0
                                   ? a.rho * sqh *
                                         normal_draw(options.seed, streams::kAgentBrownian + j,
                                                     p, i)
                                   : 0.0;
                    out.Q[j][p * S + i + 1] = Qj + h * drift[j] + noise[j];
                }
                gather_state(p, i + 1, out.Q, state.data());
                eval_field(field, i + 1, state.data(), phi.data(), y1.data(), y2.data());
                const double Pn =
                    price_at(i + 1, demand[p * S + i + 1], out.Q, p, y1.data(), y2.data());
                for (std::size_t j = 0; j < nA; ++j) {
                    const AgentParams& a = market.agents[j];
                    const double q = ker.omega[j] * ker.f_at(j, i + 1) *
                                         (out.Q[j][p * S + i + 1] - a.q0_bar) +
                                     Pn / (2.0 * a.alpha) - ker.F1_at(j, i + 1) * y1[j] +
                                     ker.F2_at(j, i + 1) * y2[j];
                    const double kap = lay.agent_kappa[j] ? kpaths[j][p * S + i + 1] : 0.0;
                    out.Q[j][p * S + i + 1] =
                        out.Q[j][p * S + i] + 0.5 * h * (drift[j] + (kap - q)) + noise[j];
                }
            }
        }
        return out;
    };

    // Backward sweep: regress Y_{i+1} + h f(t_i, X_i, Y_{i+1}) on the basis at
    // X_i; fitted values feed the next step down and the updated field.
    auto backward_pass = [&](const ForwardResult& fwd, Field& field,
                             std::vector<std::vector<double>>& fit1,
                             std::vector<std::vector<double>>& fit2) {
        field.basis.assign(N, StepBasis{});
        field.c1.assign(N, {});
        field.c2.assign(N, {});
        fit1.assign(nA, std::vector<double>(L * S, 0.0));
        fit2.assign(nA, std::vector<double>(L * S, 0.0));

        std::vector<double> ynext1(L * nA, 0.0);
        std::vector<double> ynext2(L * nA, 0.0);
        std::vector<double> resp(L * 2 * nA, 0.0);
        std::vector<double> states(L * lay.n_components, 0.0);

        std::vector<double> ycur1(L * nA, 0.0);
        std::vector<double> ycur2(L * nA, 0.0);

        for (std::size_t ii = N; ii-- > 0;) {
            const double t = grid.t(ii);
            const double tn = grid.t(ii + 1);
#pragma omp parallel for schedule(static) if (options.parallel)
            for (long long pp = 0; pp < static_cast<long long>(L); ++pp) {
                const std::size_t p = static_cast<std::size_t>(pp);
                gather_state(p, ii, fwd.Q, states.data() + p * lay.n_components);
            }
            const StepBasis basis =
                build_basis(states, L, lay.n_components, options.basis_degree, ii);
            const std::size_t K = basis.size();

            Eigen::MatrixXd C;
            // Predictor-corrector pair of regressions: the step-ii driver
            // price first uses the fitted values at ii+1, then the fitted
            // values at ii from the predictor; keeps the trapezoidal driver
            // second-order without an implicit solve.
            for (int pass = 0; pass < 2; ++pass) {
                const std::vector<double>& yi1 = pass == 0 ? ynext1 : ycur1;
                const std::vector<double>& yi2 = pass == 0 ? ynext2 : ycur2;
#pragma omp parallel for schedule(static) if (options.parallel)
                for (long long pp = 0; pp < static_cast<long long>(L); ++pp) {
                    const std::size_t p = static_cast<std::size_t>(pp);
                    const double P = price_at(ii, demand[p * S + ii], fwd.Q, p,
                                              yi1.data() + p * nA, yi2.data() + p * nA);
                    const double Pn = price_at(ii + 1, demand[p * S + ii + 1], fwd.Q, p,
                                               ynext1.data() + p * nA, ynext2.data() + p * nA);
                    for (std::size_t j = 0; j < nA; ++j) {
                        const AgentParams& a = market.agents[j];
                        const double kap = lay.agent_kappa[j] ? kpaths[j][p * S + ii] : 0.0;
                        const double kapn = lay.agent_kappa[j] ? kpaths[j][p * S + ii + 1] : 0.0;
                        const double g = P / (2.0 * a.alpha) - kap;
                        const double gn = Pn / (2.0 * a.alpha) - kapn;
                        resp[p * 2 * nA + j] =
                            ynext1[p * nA + j] +
                            0.5 * h *
                                (std::exp(-ker.omega[j] * t) * g +
                                 std::exp(-ker.omega[j] * tn) * gn);
                        resp[p * 2 * nA + nA + j] =
                            ynext2[p * nA + j] +
                            0.5 * h *
                                (std::exp(ker.omega[j] * t) * g +
                                 std::exp(ker.omega[j] * tn) * gn);
                    }
                }

                Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
                Eigen::MatrixXd B = Eigen::MatrixXd::Zero(K, 2 * nA);
                std::vector<double> phi(K);
                for (std::size_t p = 0; p < L; ++p) {
                    basis.eval(states.data() + p * lay.n_components, phi.data());
                    for (std::size_t a = 0; a < K; ++a) {
                        for (std::size_t b = a; b < K; ++b) G(a, b) += phi[a] * phi[b];
                        for (std::size_t r = 0; r < 2 * nA; ++r)
                            B(a, r) += phi[a] * resp[p * 2 * nA + r];
                    }
                }
                G = G.selfadjointView<Eigen::Upper>();
                G /= static_cast<double>(L);
                B /= static_cast<double>(L);

                // Collinear basis columns (e.g. a noise-free storage state that
                // is an exact function of the shocks) make the normal equations
                // singular but consistent. The minimum-norm solution keeps the
                // coefficients bounded, which matters because the fitted field
                // is re-evaluated at shifted states in the next forward pass.
                Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
                cod.setThreshold(1e-8);
                cod.compute(G);
                if (cod.rank() == 0) {
                    std::ostringstream msg;
                    msg << "solve: regression basis has rank zero at step " << ii;
                    throw BasisDegeneracyError(msg.str(), static_cast<int>(ii));
                }
                C = cod.solve(B);

#pragma omp parallel for schedule(static) if (options.parallel)
                for (long long pp = 0; pp < static_cast<long long>(L); ++pp) {
                    const std::size_t p = static_cast<std::size_t>(pp);
                    std::vector<double> phi_p(K);
                    basis.eval(states.data() + p * lay.n_components, phi_p.data());
                    for (std::size_t j = 0; j < nA; ++j) {
                        double v1 = 0.0, v2 = 0.0;
                        for (std::size_t k = 0; k < K; ++k) {
                            v1 += C(k, j) * phi_p[k];
                            v2 += C(k, nA + j) * phi_p[k];
                        }
                        ycur1[p * nA + j] = v1;
                        ycur2[p * nA + j] = v2;
                    }
                }
            }

            field.basis[ii] = basis;
            field.c1[ii].resize(nA * K);
            field.c2[ii].resize(nA * K);
            for (std::size_t j = 0; j < nA; ++j) {
                for (std::size_t k = 0; k < K; ++k) {
                    field.c1[ii][j * K + k] = C(k, j);
                    field.c2[ii][j * K + k] = C(k, nA + j);
                }
            }
            for (std::size_t p = 0; p < L; ++p) {
                for (std::size_t j = 0; j < nA; ++j) {
                    ynext1[p * nA + j] = ycur1[p * nA + j];
                    ynext2[p * nA + j] = ycur2[p * nA + j];
                    fit1[j][p * S + ii] = ycur1[p * nA + j];
                    fit2[j][p * S + ii] = ycur2[p * nA + j];
                }
            }
        }
        field.ready = true;
    };

    FbsdeSolution sol{grid, nA, options.seed, false, 0, {}, {}, {}, {}, {}, {}, {}, {}, {}, L};

    Field field;
    ForwardResult fwd;
    std::vector<double> prev_price;
    std::vector<std::vector<double>> fit1, fit2, prev_fit1, prev_fit2;

    if (nA == 0) {
        fwd = forward_pass(field);
        sol.converged = true;
        sol.iterations = 1;
    } else {
        // Picard iteration: forward pass under the previous field, backward
        // regression pass, stop on sup-change of the fitted Y paths.
        for (std::size_t m = 1; m <= options.max_iterations; ++m) {
            fwd = forward_pass(field);
            sol.iterations = m;
            if (m > 1) {
                double dp = 0.0;
                for (std::size_t k = 0; k < fwd.P.size(); ++k)
                    dp = std::max(dp, std::abs(fwd.P[k] - prev_price[k]));
                sol.price_changes.push_back(dp);
            }
            prev_price = fwd.P;
            backward_pass(fwd, field, fit1, fit2);
            if (m > 1) {
                // sup-change of the fitted backward components, relative to
                // their own sup-norm so the tolerance is scale-free
                double dy = 0.0, ynorm = 1.0;
                for (std::size_t j = 0; j < nA; ++j) {
                    for (std::size_t k = 0; k < fit1[j].size(); ++k) {
                        dy = std::max(dy, std::abs(fit1[j][k] - prev_fit1[j][k]));
                        dy = std::max(dy, std::abs(fit2[j][k] - prev_fit2[j][k]));
                        ynorm = std::max({ynorm, std::abs(fit1[j][k]), std::abs(fit2[j][k])});
                    }
                }
                dy /= ynorm;
                sol.y_changes.push_back(dy);
                if (dy < options.tolerance) {
                    sol.converged = true;
                    break;
                }
            }
            prev_fit1 = std::move(fit1);
            prev_fit2 = std::move(fit2);
        }
        fwd = forward_pass(field);  // price along the final field
    }

    sol.demand = std::move(demand);
    sol.price = std::move(fwd.P);
    sol.Q = std::move(fwd.Q);
    sol.Y1 = std::move(fwd.Y1);
    sol.Y2 = std::move(fwd.Y2);
    sol.kappa = std::move(kpaths);

    // Martingale-increment diagnostic Z_i ~ E[Y1_{i+1} dW_i] / h against the
    // dominant Brownian driver.
    sol.z_diag.assign(nA, std::vector<double>(N, 0.0));
    const bool use_demand_noise = market.demand_shock && market.demand_shock->sigma > 0.0;
    for (std::size_t j = 0; j < nA; ++j) {
        const std::uint64_t stream =
            use_demand_noise ? streams::kDemand : streams::kAgentBrownian + j;
        if (!use_demand_noise && market.agents[j].rho == 0.0) continue;
        for (std::size_t i = 0; i < N; ++i) {
            double acc = 0.0;
            for (std::size_t p = 0; p < L; ++p) {
                const double dw = std::sqrt(h) * normal_draw(options.seed, stream, p, i);
                acc += sol.Y1[j][p * S + i + 1] * dw;
            }
            sol.z_diag[j][i] = acc / (static_cast<double>(L) * h);
        }
    }
    return sol;
}

std::vector<double> agent_withdrawal(const FbsdeSolution& sol, const StochMarket& market,
                                     std::size_t agent) {
    if (sol.n_agents != market.agents.size() || agent >= sol.n_agents)
        throw ConfigError("agent_withdrawal: agent index out of range");
    const std::size_t S = sol.grid.size();
    const BackwardCoefficients ker(market.agents, sol.grid);
    const AgentParams& a = market.agents[agent];
    std::vector<double> q(sol.paths * S, 0.0);
    for (std::size_t p = 0; p < sol.paths; ++p) {
        for (std::size_t i = 0; i < S; ++i) {
            const std::size_t k = p * S + i;
            q[k] = ker.omega[agent] * ker.f_at(agent, i) * (sol.Q[agent][k] - a.q0_bar) +
                   sol.price[k] / (2.0 * a.alpha) - ker.F1_at(agent, i) * sol.Y1[agent][k] +
                   ker.F2_at(agent, i) * sol.Y2[agent][k];
        }
    }
    return q;
}

std::vector<StepResidual> clearing_residual(const FbsdeSolution& sol, const StochMarket& market) {
    const std::size_t S = sol.grid.size();
    const std::size_t L = sol.paths;
    const std::size_t nA = market.agents.size();
    if (sol.n_agents != nA)
        throw ConfigError("clearing_residual: market does not match the solution");
    const BackwardCoefficients ker(market.agents, sol.grid);
    const double cap_eps = 1e-9 * (1.0 + std::abs(market.P_high) + std::abs(market.P_low));

    std::vector<StepResidual> out(S);
    std::vector<double> abs_resid;
    abs_resid.reserve(L);
    for (std::size_t i = 0; i < S; ++i) {
        abs_resid.clear();
        double slack_sum = 0.0;
        std::size_t capped = 0;
        for (std::size_t p = 0; p < L; ++p) {
            const double P = sol.price[p * S + i];
            double qsum = 0.0;
            for (std::size_t j = 0; j < nA; ++j) {
                const AgentParams& a = market.agents[j];
                qsum += ker.omega[j] * ker.f_at(j, i) * (sol.Q[j][p * S + i] - a.q0_bar) +
                        P / (2.0 * a.alpha) - ker.F1_at(j, i) * sol.Y1[j][p * S + i] +
                        ker.F2_at(j, i) * sol.Y2[j][p * S + i];
            }
            const double resid = sol.demand[p * S + i] - market.C0 - market.C1 * P - qsum;
            const bool at_cap = P >= market.P_high - cap_eps || P <= market.P_low + cap_eps;
            if (at_cap) {
                ++capped;
                slack_sum += resid;
            } else {
                abs_resid.push_back(std::abs(resid));
            }
        }
        StepResidual& r = out[i];
        r.capped_fraction = static_cast<double>(capped) / static_cast<double>(L);
        r.mean_capped_slack = capped ? slack_sum / static_cast<double>(capped) : 0.0;
        if (!abs_resid.empty()) {
            double s = 0.0;
            for (double v : abs_resid) s += v;
            r.mean = s / static_cast<double>(abs_resid.size());
            std::sort(abs_resid.begin(), abs_resid.end());
            const std::size_t idx = static_cast<std::size_t>(
                std::ceil(0.99 * static_cast<double>(abs_resid.size()))) - 1;
            r.p99 = abs_resid[std::min(idx, abs_resid.size() - 1)];
        }
    }
    return out;
}

}  // namespace storeq
