#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "prion/eigen_solver.hpp"
#include "prion/model.hpp"
#include "prion/parallel.hpp"

namespace prion {

enum class TransportOrder { First, SecondLimited };

struct IntegratorOptions {
    double t_end = 100.0;
    double sample_interval = 0.5;          // series spacing in days
    std::vector<double> snapshot_times{};  // profile snapshots (clamped to [0, t_end])
    double cfl = 0.9;                      // fraction of the positivity step bound
    double v_change = 0.1;                 // max relative V change per step (accuracy of V)
    double v_stiffness = 0.05;             // max dt times the linear relaxation rate of V
    int max_halvings = 30;
    TransportOrder transport = TransportOrder::First;
    /// Optional early stop, evaluated at every sample: returns true to end the run.
    std::function<bool(double t, double v, double count)> stop_when{};
};

struct Snapshot {
    double t = 0.0;
    std::vector<double> u;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<double> v_series;
    std::vector<double> rho_series;  // U(t) = int u
    std::vector<double> p_series;    // P(t) = int x u
    std::vector<double> conservation_residuals;  // largest per-step residual since last sample
    std::vector<Snapshot> snapshots;
    double truncation_flux_total = 0.0;  // mass (first moment) lost through xmax
    double max_relative_residual = 0.0;  // max over steps of |residual| / (||u||_1 + V)
    std::size_t steps = 0;
    std::size_t rejected_steps = 0;
    double min_dt = std::numeric_limits<double>::infinity();
    double max_dt = 0.0;
    bool stopped_early = false;
    PolymerState final_state;
};

namespace detail {

inline double minmod(double a, double b) {
    if (a * b <= 0.0) return 0.0;
    return std::abs(a) < std::abs(b) ? a : b;
}

struct Rates {
    double dv = 0.0;
    std::vector<double> du;
    double conversion = 0.0;  // monomers per day taken up by transport
    double outflow_mass = 0.0;
    double mu_mass = 0.0;     // int mu x u
};

/// Right-hand side of the coupled system. Transport fluxes sit on the right cell edges and the
/// monomer uptake is the flux-weighted sum of transfer lengths, so that d(V + P)/dt equals
/// lambda - gamma V - int mu x u - outflow mass exactly in floating-point-free arithmetic.
inline void evaluate_rates(const DiscreteModel& model, double v, std::span<const double> u,
                           TransportOrder order, Rates& r) {
    const auto& g = model.grid();
    const auto& s = model.samples();
    const auto beta = model.beta_effective();
    const auto len = g.transfer_lengths();
    const auto& c = model.coeffs();
    const std::size_t n = u.size();
    r.du.assign(n, 0.0);
    double inflow = 0.0;
    double conversion = 0.0;
    double mu_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double flux = v * s.tau[i] * u[i];
        if (order == TransportOrder::SecondLimited && i > 0 && i + 1 < n) {
            const double fl = s.tau[i - 1] * u[i - 1];
            const double fc = s.tau[i] * u[i];
            const double fr = s.tau[i + 1] * u[i + 1];
            flux = v * (fc + 0.5 * minmod(fr - fc, fc - fl));
        }
        conversion += flux * len[i];
        r.du[i] = (inflow - flux) / g.width(i) - (s.mu[i] + beta[i]) * u[i];
        mu_mass += g.center(i) * s.mu[i] * u[i] * g.width(i);
        inflow = flux;
    }
    model.kernel().add_gain(beta, u, r.du);
    r.conversion = conversion;
    r.outflow_mass = inflow * g.ghost_center();
    r.mu_mass = mu_mass;
    r.dv = c.lambda - c.gamma * v - conversion + model.monomer_return(u);
}

}  // namespace detail

/// Largest explicit step that keeps a forward-Euler stage nonnegative at monomer level v.
inline double positivity_step(const DiscreteModel& model, double v) {
    const auto& g = model.grid();
    const auto& s = model.samples();
    const auto beta = model.beta_effective();
    double rate = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i)
        rate = std::max(rate, v * s.tau[i] / g.width(i) + s.mu[i] + beta[i]);
    return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

/// Method-of-lines integration with the two-stage strong-stability-preserving Runge-Kutta
/// scheme (Heun). Steps are limited by positivity of each Euler stage and by the relative
/// change of V, and are halved whenever a stage would go negative.
inline Trajectory integrate(const DiscreteModel& model, const PolymerState& initial,
                            const IntegratorOptions& opts) {
    if (!(opts.t_end > initial.t)) throw DomainError("t_end must exceed the initial time");
    if (!(opts.sample_interval > 0.0)) throw DomainError("sample interval must be > 0");
    if (initial.u.size() != model.size()) throw DomainError("state does not match the model grid");
    if (!(initial.v >= 0.0)) throw DomainError("initial V must be >= 0");
    for (double x : initial.u)
        if (!(x >= 0.0)) throw PositivityError("initial density must be nonnegative");

    const auto& g = model.grid();
    const auto& c = model.coeffs();
    const std::size_t n = model.size();
    const double stage_fraction = opts.transport == TransportOrder::SecondLimited ? 0.5 : 1.0;

    Trajectory tr;
    double t = initial.t;
    double v = initial.v;
    std::vector<double> u = initial.u;
    std::vector<double> u1(n), u2(n);
    detail::Rates r0, r1;

    std::vector<double> snaps = opts.snapshot_times;
    for (double& s : snaps) s = std::clamp(s, initial.t, opts.t_end);
    std::sort(snaps.begin(), snaps.end());
    snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
    std::size_t next_snap = 0;

    double pending_residual = 0.0;
    auto record = [&]() {
        tr.times.push_back(t);
        tr.v_series.push_back(v);
        tr.rho_series.push_back(integrate(g, u));
        tr.p_series.push_back(integrate_first_moment(g, u));
        tr.conservation_residuals.push_back(pending_residual);
        pending_residual = 0.0;
    };
    auto take_snapshots = [&]() {
        while (next_snap < snaps.size() && snaps[next_snap] <= t + 1e-12) {
            tr.snapshots.push_back({snaps[next_snap], u});
            ++next_snap;
        }
    };
    record();
    take_snapshots();

    long sample_index = 1;
    auto next_sample_time = [&]() {
        return std::min(opts.t_end, initial.t + opts.sample_interval * static_cast<double>(sample_index));
    };

    while (t < opts.t_end) {
        const double target = std::min(next_sample_time(),
                                       next_snap < snaps.size() ? snaps[next_snap] : opts.t_end);
        detail::evaluate_rates(model, v, u, opts.transport, r0);
        // An empty polymer state stays empty, so only the V equation limits the step.
        const bool empty = std::all_of(u.begin(), u.end(), [](double x) { return x == 0.0; });
        double dt = empty ? std::numeric_limits<double>::infinity()
                          : opts.cfl * stage_fraction * positivity_step(model, v);
        const double vscale = std::max(std::abs(r0.dv), 1e-300);
        dt = std::min(dt, opts.v_change * std::max(v, 1e-3 * std::max(c.vbar(), 1.0)) / vscale);
        // V relaxes at rate gamma + int tau u; keep the explicit stage well inside stability.
        dt = std::min(dt, opts.v_stiffness / (c.gamma + r0.conversion / std::max(v, 1e-300)));
        if (!(dt > 0.0)) dt = target - t;
        bool last = false;
        if (t + dt * (1.0 + 1e-6) >= target) {
            dt = target - t;
            last = true;
        }

        double v2 = 0.0;
        int halvings = 0;
        for (;;) {
            bool ok = true;
            const double v1 = v + dt * r0.dv;
            for (std::size_t i = 0; i < n; ++i) {
                u1[i] = u[i] + dt * r0.du[i];
                if (u1[i] < 0.0) ok = false;
            }
            if (ok && v1 >= 0.0) {
                detail::evaluate_rates(model, v1, u1, opts.transport, r1);
                v2 = v + 0.5 * dt * (r0.dv + r1.dv);
                for (std::size_t i = 0; i < n; ++i) {
                    u2[i] = u[i] + 0.5 * dt * (r0.du[i] + r1.du[i]);
                    if (u2[i] < 0.0) ok = false;
                }
                if (!std::isfinite(v2)) ok = false;
                if (v2 < 0.0) ok = false;
            } else {
                ok = false;
            }
            if (ok) break;
            if (++halvings > opts.max_halvings)
                throw PositivityError("step size underflow at t = " + std::to_string(t) +
                                      " while keeping the state nonnegative");
            ++tr.rejected_steps;
            dt *= 0.5;
            last = false;
        }

        // Conservation: the exact semi-discrete identity evaluated at the averaged stages.
        const double p_old = integrate_first_moment(g, u);
        const double p_new = integrate_first_moment(g, u2);
        const double lhs = ((v2 + p_new) - (v + p_old)) / dt;
        const double rhs0 = c.lambda - c.gamma * v - r0.mu_mass - r0.outflow_mass;
        const double rhs1 = c.lambda - c.gamma * (v + dt * r0.dv) - r1.mu_mass - r1.outflow_mass;
        const double residual = lhs - 0.5 * (rhs0 + rhs1);
        const double unorm = integrate(g, u2);
        tr.max_relative_residual =
            std::max(tr.max_relative_residual, std::abs(residual) / (unorm + v2 + 1e-300));
        pending_residual = std::max(pending_residual, std::abs(residual));
        tr.truncation_flux_total += 0.5 * dt * (r0.outflow_mass + r1.outflow_mass);

        std::swap(u, u2);
        v = v2;
        t = last ? target : t + dt;
        ++tr.steps;
        tr.min_dt = std::min(tr.min_dt, dt);
        tr.max_dt = std::max(tr.max_dt, dt);
        take_snapshots();
        if (last && target == next_sample_time()) {
            record();
            ++sample_index;
            if (opts.stop_when && opts.stop_when(t, v, tr.rho_series.back())) {
                tr.stopped_early = true;
                break;
            }
        }
    }
    if (tr.times.back() != t) record();
    tr.final_state = PolymerState(model.grid_ptr(), v, u, t);
    return tr;
}

struct GrowthFit {
    double rate = 0.0;       // slope of log rho
    double intercept = 0.0;
    double r_squared = 0.0;
    double v_drift = 0.0;    // max |V - vbar| / vbar over the window
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t points = 0;
};

/// Least-squares slope of log rho(t) over [t_start, t_end].
inline GrowthFit growth_rate(std::span<const double> times, std::span<const double> rho,
                             std::span<const double> v, double vbar, double t_start,
                             double t_end) {
    GrowthFit f;
    f.t_start = t_start;
    f.t_end = t_end;
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0, syy = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t_start || times[i] > t_end) continue;
        if (!(rho[i] > 0.0)) throw DomainError("growth fit needs rho > 0 on the window");
        const double y = std::log(rho[i]);
        st += times[i];
        sy += y;
        stt += times[i] * times[i];
        sty += times[i] * y;
        syy += y * y;
        if (!v.empty() && vbar > 0.0) f.v_drift = std::max(f.v_drift, std::abs(v[i] - vbar) / vbar);
        ++k;
    }
    if (k < 2) throw DomainError("growth fit window holds fewer than two samples");
    const double kk = static_cast<double>(k);
    const double mt = st / kk, my = sy / kk;
    const double sxx = stt - kk * mt * mt;
    const double sxy = sty - kk * mt * my;
    const double syy_c = syy - kk * my * my;
    f.rate = sxy / sxx;
    f.intercept = my - f.rate * mt;
    f.r_squared = syy_c > 0.0 ? (sxy * sxy) / (sxx * syy_c) : 1.0;
    f.points = k;
    return f;
}

inline GrowthFit growth_rate(const Trajectory& tr, double vbar, double t_start, double t_end) {
    return growth_rate(tr.times, tr.rho_series, tr.v_series, vbar, t_start, t_end);
}

/// Linear-regime window: ends where V first leaves the band |V - vbar| <= drift * vbar
/// (or at the end of the run) and starts halfway there, after the initial transient.
inline std::optional<std::pair<double, double>> linear_regime_window(const Trajectory& tr,
                                                                     double vbar,
                                                                     double drift = 0.05) {
    std::size_t end = tr.times.size();
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        if (std::abs(tr.v_series[i] - vbar) > drift * vbar) {
            end = i;
            break;
        }
    }
    if (end < 4) return std::nullopt;
    const double t1 = tr.times[end - 1];
    const double t0 = tr.times.front() + 0.5 * (t1 - tr.times.front());
    return std::make_pair(t0, t1);
}

struct IncubationResult {
    bool reached = false;
    double t_incubation = std::numeric_limits<double>::quiet_NaN();
    double threshold = 0.0;
    double inoculation = 0.0;
    std::optional<double> predicted;      // -(1/lambda) log(threshold / inoculation)
    double final_rho = 0.0;
};

inline IncubationResult incubation_time(const Trajectory& tr, double threshold,
                                        double inoculation, double lambda_vbar) {
    if (!(inoculation > 0.0) || !(threshold > inoculation))
        throw DomainError("incubation needs threshold > inoculation > 0");
    IncubationResult r;
    r.threshold = threshold;
    r.inoculation = inoculation;
    r.final_rho = tr.rho_series.back();
    if (lambda_vbar < 0.0) r.predicted = -std::log(threshold / inoculation) / lambda_vbar;
    for (std::size_t i = 1; i < tr.times.size(); ++i) {
        if (tr.rho_series[i] >= threshold && tr.rho_series[i - 1] < threshold) {
            const double a = tr.rho_series[i - 1], b = tr.rho_series[i];
            const double w = (threshold - a) / (b - a);
            r.t_incubation = tr.times[i - 1] + w * (tr.times[i] - tr.times[i - 1]);
            r.reached = true;
            break;
        }
    }
    if (!r.reached && !tr.rho_series.empty() && tr.rho_series.front() >= threshold) {
        r.t_incubation = tr.times.front();
        r.reached = true;
    }
    return r;
}

enum class StabilityVerdict { Stable, Unstable, Inconclusive };

inline const char* to_string(StabilityVerdict v) {
    switch (v) {
        case StabilityVerdict::Stable: return "stable";
        case StabilityVerdict::Unstable: return "unstable";
        default: return "inconclusive";
    }
}

struct StabilityReport {
    StabilityVerdict verdict = StabilityVerdict::Inconclusive;
    double lambda_vbar = 0.0;
    double alpha = 0.0;  // weight of int u phi in the norm
    HypothesisConstants hypotheses;
    double vbar_over_lambda = 0.0;        // vbar / lambda(vbar)
    double k_over_k1k2 = 0.0;             // k / (K1 K2)
    double fitted_rate = 0.0;             // slope of log of the weighted norm
    double gamma = 0.0;
    double initial_norm = 0.0;
    double final_norm = 0.0;
    std::optional<double> escape_time;    // first time the norm exceeds 10 * initial norm
    double final_v = 0.0;
    double final_center_of_mass = 0.0;
    std::vector<double> times;
    std::vector<double> norms;
    Trajectory trajectory;
};

/// Perturbs the disease-free state (vbar, 0) by eps * u0 and follows the weighted norm
///     N(t) = alpha int u phi + |V - vbar|
/// with phi the adjoint eigenvector at vbar. alpha = 2 K2 vbar / lambda(vbar) when
/// lambda(vbar) > 0, else 1.
inline StabilityReport stability_experiment(const DiscreteModel& model, std::span<const double> u0,
                                            double eps, double t_end,
                                            const IntegratorOptions& base = {}) {
    const auto& g = model.grid();
    const double vbar = model.coeffs().vbar();
    StabilityReport rep;
    rep.gamma = model.coeffs().gamma;
    const auto adj = adjoint_eigenpair(model, vbar);
    rep.lambda_vbar = adj.lambda;
    rep.hypotheses = hypothesis_constants(model, vbar);
    rep.vbar_over_lambda = vbar / rep.lambda_vbar;
    rep.k_over_k1k2 = rep.hypotheses.k / (rep.hypotheses.k1 * rep.hypotheses.k2);
    rep.alpha = rep.lambda_vbar > 0.0 ? 2.0 * rep.hypotheses.k2 * vbar / rep.lambda_vbar : 1.0;

    std::vector<double> u(u0.begin(), u0.end());
    for (double& x : u) x *= eps;
    PolymerState init(model.grid_ptr(), vbar, u);
    IntegratorOptions opts = base;
    opts.t_end = t_end;
    opts.stop_when = nullptr;

    // phi is sampled on the grid, so the weighted norm is evaluated from snapshots of u at
    // every sample: rebuild it from the series via a dedicated pass.
    const double norm_scale = rep.alpha;
    auto weighted = [&](double v, std::span<const double> dens) {
        double s = 0.0;
        for (std::size_t i = 0; i < dens.size(); ++i) s += dens[i] * adj.phi[i] * g.width(i);
        return norm_scale * s + std::abs(v - vbar);
    };
    opts.snapshot_times.clear();
    const int samples = 200;
    for (int k = 0; k <= samples; ++k) opts.snapshot_times.push_back(t_end * k / samples);
    if (eps == 0.0) {
        rep.verdict = StabilityVerdict::Stable;
        rep.final_v = vbar;
        rep.trajectory = integrate(model, init, opts);
        rep.final_v = rep.trajectory.final_state.v;
        return rep;
    }
    rep.trajectory = integrate(model, init, opts);
    const auto& tr = rep.trajectory;
    std::size_t vi = 0;
    for (const auto& snap : tr.snapshots) {
        while (vi + 1 < tr.times.size() && tr.times[vi] < snap.t) ++vi;
        rep.times.push_back(snap.t);
        rep.norms.push_back(weighted(tr.v_series[vi], snap.u));
    }
    rep.initial_norm = rep.norms.front();
    rep.final_norm = rep.norms.back();
    for (std::size_t i = 0; i < rep.norms.size(); ++i) {
        if (rep.norms[i] > 10.0 * rep.initial_norm) {
            rep.escape_time = rep.times[i];
            break;
        }
    }
    // Fit the decay/growth rate over the second half of the run, or up to the escape.
    const double fit_end = rep.escape_time ? *rep.escape_time : t_end;
    std::vector<double> ft, fn;
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
        if (rep.times[i] >= 0.5 * fit_end && rep.times[i] <= fit_end && rep.norms[i] > 0.0) {
            ft.push_back(rep.times[i]);
            fn.push_back(rep.norms[i]);
        }
    }
    if (ft.size() >= 2) rep.fitted_rate = growth_rate(ft, fn, {}, 0.0, ft.front(), ft.back()).rate;
    rep.final_v = tr.final_state.v;
    rep.final_center_of_mass =
        integrate_first_moment(g, tr.final_state.u) / std::max(integrate(g, tr.final_state.u), 1e-300);

    if (rep.escape_time) {
        rep.verdict = StabilityVerdict::Unstable;
    } else if (rep.final_norm < 0.1 * rep.initial_norm && rep.fitted_rate < 0.0) {
        rep.verdict = StabilityVerdict::Stable;
    }
    return rep;
}

/// Discrete initial profile c * x^2 / (1 + x^4) (cell averages).
inline std::vector<double> rational_profile(const SizeGrid& g, double c) {
    return project(g, [c](double x) { return c * x * x / (1.0 + x * x * x * x); });
}

}  // namespace prion
