#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prion/dynamics.hpp"
#include "prion/error.hpp"

namespace prion {

/// Rates of the discrete nucleated-polymerization system with polymers of i >= n0 monomers:
///
///     dV/dt   = lambda - gamma V - tau V U + 2 beta sum_{i<n0} sum_{j>i} i u_j
///     du_i/dt = -mu u_i - beta (i-1) u_i - tau V (u_i - u_{i-1}) + 2 beta sum_{j>i} u_j
///
/// truncated at i = N; polymers growing past N leave the system and are accounted for.
struct MaselParams {
    double lambda = 0.0;
    double gamma = 1.0;
    double tau = 0.0;
    double beta = 0.0;
    double mu = 0.0;
    int n0 = 1;
    int n_max = 0;  // N
};

struct DiscreteState {
    double t = 0.0;
    double v = 0.0;
    int n0 = 1;
    std::vector<double> u;  // u[k] holds polymers of size n0 + k

    double count() const {
        double s = 0.0;
        for (double x : u) s += x;
        return s;
    }
    double mass() const {
        double s = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) s += static_cast<double>(n0 + static_cast<int>(k)) * u[k];
        return s;
    }
};

/// Unit calibration between the discrete and continuous systems. One continuum size unit
/// corresponds to `scale` monomers: x = i / scale, V_d = scale V_c, lambda_d = scale lambda_c,
/// beta_d = beta0 / scale, tau_d = tau_c and u_i = u_c(i / scale) / scale.
struct Calibration {
    double scale = 10.0;
    int n0 = 1;
    int n_max = 0;  // 0 selects 20 mu / beta_d
};

inline void validate(const MaselParams& p) {
    std::vector<ConfigIssue> issues;
    if (!(p.lambda >= 0.0)) issues.push_back({0, "lambda", "must be >= 0"});
    if (!(p.gamma > 0.0)) issues.push_back({0, "gamma", "must be > 0"});
    if (!(p.tau >= 0.0)) issues.push_back({0, "tau", "must be >= 0"});
    if (!(p.beta >= 0.0)) issues.push_back({0, "beta", "must be >= 0"});
    if (!(p.mu >= 0.0)) issues.push_back({0, "mu", "must be >= 0"});
    if (p.n0 < 1) issues.push_back({0, "n0", "must be >= 1"});
    if (p.n_max <= p.n0) issues.push_back({0, "n_max", "must exceed n0"});
    if (!issues.empty()) throw ConfigError(std::move(issues));
}

/// Discrete parameters matching continuum coefficients with constant tau and mu and
/// beta = beta0 x. Anything else cannot be calibrated and is rejected.
inline MaselParams calibrate(const CoefficientSet& c, const Calibration& cal) {
    std::vector<ConfigIssue> issues;
    if (!is_constant(c.tau)) issues.push_back({0, "tau", "calibration needs constant tau"});
    if (!is_constant(c.mu)) issues.push_back({0, "mu", "calibration needs constant mu"});
    if (!is_linear_through_origin(c.beta))
        issues.push_back({0, "beta", "calibration needs beta = beta0 x"});
    if (!(cal.scale > 0.0)) issues.push_back({0, "scale", "must be > 0"});
    if (!issues.empty()) throw ConfigError(std::move(issues));
    MaselParams p;
    p.lambda = cal.scale * c.lambda;
    p.gamma = c.gamma;
    p.tau = std::get<Constant>(c.tau).value;
    p.beta = std::get<Affine>(c.beta).slope / cal.scale;
    p.mu = std::get<Constant>(c.mu).value;
    p.n0 = cal.n0;
    p.n_max = cal.n_max > 0 ? cal.n_max
                            : std::max(p.n0 + 2, static_cast<int>(std::ceil(20.0 * p.mu / p.beta)));
    validate(p);
    return p;
}

/// Samples a continuum density onto the discrete sizes: u_i = scale^-1 f(i / scale).
template <class F>
DiscreteState discretize(const MaselParams& p, double scale, double v_continuum, F&& f) {
    DiscreteState s;
    s.n0 = p.n0;
    s.v = scale * v_continuum;
    s.u.resize(static_cast<std::size_t>(p.n_max - p.n0 + 1));
    for (std::size_t k = 0; k < s.u.size(); ++k) {
        const double i = static_cast<double>(p.n0 + static_cast<int>(k));
        s.u[k] = f(i / scale) / scale;
    }
    return s;
}

namespace detail {

struct MaselRates {
    double dv = 0.0;
    std::vector<double> du;
    double outflow_mass = 0.0;  // polymers leaving past N, times N + 1
    double mu_mass = 0.0;
};

inline void masel_rates(const MaselParams& p, double v, std::span<const double> u, MaselRates& r) {
    const std::size_t m = u.size();
    r.du.assign(m, 0.0);
    double tail = 0.0;  // sum_{j>i} u_j
    for (std::size_t k = m; k-- > 0;) {
        const double i = static_cast<double>(p.n0 + static_cast<int>(k));
        const double prev = k > 0 ? u[k - 1] : 0.0;
        r.du[k] = -p.mu * u[k] - p.beta * (i - 1.0) * u[k] - p.tau * v * (u[k] - prev) +
                  2.0 * p.beta * tail;
        tail += u[k];
    }
    const double count = tail;
    double mass = 0.0;
    for (std::size_t k = 0; k < m; ++k) mass += static_cast<double>(p.n0 + static_cast<int>(k)) * u[k];
    const double n0 = static_cast<double>(p.n0);
    // sum_{i=1}^{n0-1} i * sum_{j>i} u_j, where every stored j >= n0 > i
    const double small_fragments = 0.5 * n0 * (n0 - 1.0) * count;
    r.dv = p.lambda - p.gamma * v - p.tau * v * count + 2.0 * p.beta * small_fragments;
    r.outflow_mass = p.tau * v * u[m - 1] * static_cast<double>(p.n_max + 1);
    r.mu_mass = p.mu * mass;
}

inline double masel_positivity_step(const MaselParams& p, double v) {
    const double rate = p.mu + p.beta * (p.n_max - 1) + p.tau * v;
    return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

}  // namespace detail

struct DiscreteStep {
    DiscreteState state;
    double dt = 0.0;
    int halvings = 0;
    double residual = 0.0;  // Delta(V + sum i u_i)/dt minus the stage-averaged balance
};

/// One Heun (RK2) step of size dt, halved until both stages stay nonnegative.
inline DiscreteStep step_discrete(const MaselParams& p, const DiscreteState& s, double dt,
                                  int max_halvings = 30) {
    if (!(dt > 0.0)) throw DomainError("discrete step needs dt > 0");
    detail::MaselRates r0, r1;
    detail::masel_rates(p, s.v, s.u, r0);
    const std::size_t m = s.u.size();
    DiscreteStep out;
    out.state = s;
    std::vector<double> u1(m);
    for (int h = 0;; ++h) {
        bool ok = true;
        const double v1 = s.v + dt * r0.dv;
        for (std::size_t k = 0; k < m; ++k) {
            u1[k] = s.u[k] + dt * r0.du[k];
            if (u1[k] < 0.0) ok = false;
        }
        if (ok && v1 >= 0.0) {
            detail::masel_rates(p, v1, u1, r1);
            out.state.v = s.v + 0.5 * dt * (r0.dv + r1.dv);
            for (std::size_t k = 0; k < m; ++k) {
                out.state.u[k] = s.u[k] + 0.5 * dt * (r0.du[k] + r1.du[k]);
                if (out.state.u[k] < 0.0) ok = false;
            }
            if (out.state.v < 0.0 || !std::isfinite(out.state.v)) ok = false;
            if (ok) {
                out.dt = dt;
                out.halvings = h;
                out.state.t = s.t + dt;
                const double lhs = (out.state.v + out.state.mass() - s.v - s.mass()) / dt;
                const double b0 = p.lambda - p.gamma * s.v - r0.mu_mass - r0.outflow_mass;
                const double b1 = p.lambda - p.gamma * v1 - r1.mu_mass - r1.outflow_mass;
                out.residual = lhs - 0.5 * (b0 + b1);
                return out;
            }
        }
        if (h >= max_halvings)
            throw PositivityError("discrete step underflow while keeping the state nonnegative");
        dt *= 0.5;
    }
}

struct DiscreteTrajectory {
    std::vector<double> times;
    std::vector<double> v_series;
    std::vector<double> count_series;  // U = sum u_i
    std::vector<double> mass_series;   // sum i u_i
    double max_tail_ratio = 0.0;       // max over samples of u_N / max_i u_i
    double max_relative_residual = 0.0;
    std::size_t steps = 0;
    DiscreteState final_state;
};

/// Integrates with the same step controller as the continuum integrator (positivity bound,
/// relative V change, V relaxation), so runs with an empty polymer state take identical steps.
inline DiscreteTrajectory run_discrete(const MaselParams& p, const DiscreteState& initial,
                                       double t_end, double sample_interval,
                                       const IntegratorOptions& ctl = {}) {
    validate(p);
    if (initial.u.size() != static_cast<std::size_t>(p.n_max - p.n0 + 1) || initial.n0 != p.n0)
        throw DomainError("discrete state does not match n0..N");
    if (!(t_end > initial.t) || !(sample_interval > 0.0))
        throw DomainError("discrete run needs t_end > t0 and a positive sample interval");
    DiscreteTrajectory tr;
    DiscreteState s = initial;
    auto record = [&]() {
        tr.times.push_back(s.t);
        tr.v_series.push_back(s.v);
        tr.count_series.push_back(s.count());
        tr.mass_series.push_back(s.mass());
        const double top = *std::max_element(s.u.begin(), s.u.end());
        if (top > 0.0) tr.max_tail_ratio = std::max(tr.max_tail_ratio, s.u.back() / top);
    };
    record();
    long index = 1;
    detail::MaselRates r;
    const double vbar = p.lambda / p.gamma;
    while (s.t < t_end) {
        const double target = std::min(t_end, initial.t + sample_interval * static_cast<double>(index));
        detail::masel_rates(p, s.v, s.u, r);
        const bool empty = std::all_of(s.u.begin(), s.u.end(), [](double x) { return x == 0.0; });
        double dt = empty ? std::numeric_limits<double>::infinity()
                          : ctl.cfl * detail::masel_positivity_step(p, s.v);
        const double vscale = std::max(std::abs(r.dv), 1e-300);
        dt = std::min(dt, ctl.v_change * std::max(s.v, 1e-3 * std::max(vbar, 1.0)) / vscale);
        dt = std::min(dt, ctl.v_stiffness / (p.gamma + p.tau * s.count()));
        bool last = false;
        if (s.t + dt * (1.0 + 1e-6) >= target) {
            dt = target - s.t;
            last = true;
        }
        auto st = step_discrete(p, s, dt, ctl.max_halvings);
        if (st.halvings > 0) last = false;
        const double scale = st.state.count() + st.state.v;
        tr.max_relative_residual =
            std::max(tr.max_relative_residual, std::abs(st.residual) / (scale + 1e-300));
        s = std::move(st.state);
        if (last) s.t = target;
        ++tr.steps;
        if (last) {
            record();
            ++index;
        }
    }
    tr.final_state = s;
    return tr;
}

struct DiscrepancyReport {
    double scale = 0.0;
    int n0 = 1;
    int n_max = 0;
    double sup_v = 0.0;      // sup_t |V_d / scale - V_c| / |V_c|
    double sup_count = 0.0;  // sup_t |U_d - U_c| / |U_c|
    double sup_mass = 0.0;   // sup_t |P_d / scale - P_c| / |P_c|
    std::optional<double> growth_discrete;
    std::optional<double> growth_continuum;
    std::optional<double> growth_discrepancy;  // relative
    double fit_start = 0.0;
    double fit_end = 0.0;
    double max_tail_ratio = 0.0;
    bool within_gate = false;  // growth (or V) discrepancy <= 10%
};

/// Compares a discrete run with a continuum run over their common sample times. The discrete
/// parameters must be the calibration of the continuum coefficients.
inline DiscrepancyReport compare_continuum(const MaselParams& p, const DiscreteTrajectory& d,
                                           const CoefficientSet& c, const Trajectory& tr,
                                           const Calibration& cal) {
    const MaselParams expect = calibrate(c, cal);
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
    std::vector<ConfigIssue> issues;
    if (!close(p.lambda, expect.lambda)) issues.push_back({0, "lambda", "not calibrated (scale * lambda)"});
    if (!close(p.gamma, expect.gamma)) issues.push_back({0, "gamma", "differs from the continuum value"});
    if (!close(p.tau, expect.tau)) issues.push_back({0, "tau", "differs from the continuum value"});
    if (!close(p.beta, expect.beta)) issues.push_back({0, "beta", "not calibrated (beta0 / scale)"});
    if (!close(p.mu, expect.mu)) issues.push_back({0, "mu", "differs from the continuum value"});
    if (p.n0 != cal.n0) issues.push_back({0, "n0", "differs from the calibration"});
    if (d.times.size() != tr.times.size())
        issues.push_back({0, "sample_interval", "discrete and continuum samples do not line up"});
    if (!issues.empty()) throw ConfigError(std::move(issues));

    DiscrepancyReport rep;
    rep.scale = cal.scale;
    rep.n0 = p.n0;
    rep.n_max = p.n_max;
    rep.max_tail_ratio = d.max_tail_ratio;
    auto rel = [](double a, double b) {
        const double den = std::abs(b);
        return den > 0.0 ? std::abs(a - b) / den : std::abs(a);
    };
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        rep.sup_v = std::max(rep.sup_v, rel(d.v_series[i] / cal.scale, tr.v_series[i]));
        rep.sup_count = std::max(rep.sup_count, rel(d.count_series[i], tr.rho_series[i]));
        rep.sup_mass = std::max(rep.sup_mass, rel(d.mass_series[i] / cal.scale, tr.p_series[i]));
    }
    const double vbar = c.vbar();
    if (tr.rho_series.front() > 0.0) {
        if (auto w = linear_regime_window(tr, vbar)) {
            rep.fit_start = w->first;
            rep.fit_end = w->second;
            std::vector<double> vd(d.v_series.size());
            for (std::size_t i = 0; i < vd.size(); ++i) vd[i] = d.v_series[i] / cal.scale;
            const auto fc = growth_rate(tr, vbar, w->first, w->second);
            const auto fd = growth_rate(d.times, d.count_series, vd, vbar, w->first, w->second);
            rep.growth_continuum = fc.rate;
            rep.growth_discrete = fd.rate;
            rep.growth_discrepancy = std::abs(fd.rate - fc.rate) / std::abs(fc.rate);
        }
    }
    rep.within_gate = rep.growth_discrepancy ? *rep.growth_discrepancy <= 0.1 : rep.sup_v <= 0.1;
    return rep;
}

}  // namespace prion
