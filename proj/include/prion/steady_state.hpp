#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "prion/eigen_solver.hpp"

namespace prion {

struct RootOptions {
    double tolerance = 1e-8;        // |lambda(V_inf)|
    double v_max = 0.0;             // upper bracket; 0 selects 10 * lambda/gamma
    int max_iterations = 200;
    EigenOptions eigen{};
};

struct RootResult {
    std::optional<double> v_inf;    // empty when lambda(.) has no sign change on the bracket
    double lambda_at_root = std::numeric_limits<double>::quiet_NaN();
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    double lambda_lo = 0.0;
    double lambda_hi = 0.0;
    int iterations = 0;
    std::vector<std::string> warnings;
};

/// Root of lambda(V) = 0 on [0, v_max]: a log-spaced scan locates the first sign change,
/// bisection refines it. Monotonicity is not assumed. On a truncated domain lambda(V) turns
/// back up once the profile reaches xmax, so the first crossing is the physical one.
/// Every evaluated pair is checked against a decreasing order; violations become warnings.
inline RootResult find_v_inf(const DiscreteModel& model, const RootOptions& opts = {}) {
    RootResult r;
    const double vmax = opts.v_max > 0.0 ? opts.v_max : 10.0 * model.coeffs().vbar();
    if (!(vmax > 0.0)) throw DomainError("root bracket upper end must be > 0 (set v_max)");
    auto lambda_of = [&](double v) { return principal_eigenpair(model, v, opts.eigen).lambda; };
    std::vector<std::pair<double, double>> seen;
    double lo = 0.0;
    double flo = lambda_of(0.0);
    seen.emplace_back(lo, flo);
    r.bracket_lo = 0.0;
    r.bracket_hi = vmax;
    r.lambda_lo = flo;
    if (flo == 0.0) {
        r.v_inf = 0.0;
        r.lambda_at_root = 0.0;
        return r;
    }
    double hi = vmax;
    double fhi = flo;
    bool bracketed = false;
    if (flo > 0.0) {
        constexpr int points = 40;
        for (int k = 0; k <= points; ++k) {
            const double v = vmax * std::pow(10.0, -4.0 + 4.0 * k / points);
            const double f = lambda_of(v);
            seen.emplace_back(v, f);
            if (f <= 0.0) {
                hi = v;
                fhi = f;
                bracketed = true;
                break;
            }
            lo = v;
            flo = f;
        }
    }
    if (!bracketed) {
        r.lambda_hi = seen.back().second;
        return r;
    }
    r.bracket_lo = lo;
    r.bracket_hi = hi;
    r.lambda_lo = flo;
    r.lambda_hi = fhi;
    double mid = hi;
    double fmid = fhi;
    for (int it = 1; it <= opts.max_iterations && std::abs(fmid) > opts.tolerance; ++it) {
        mid = 0.5 * (lo + hi);
        fmid = lambda_of(mid);
        seen.emplace_back(mid, fmid);
        r.iterations = it;
        if (std::abs(fmid) <= opts.tolerance || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi)
            break;
        if (fmid > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 1; i < seen.size(); ++i) {
        if (seen[i].second > seen[i - 1].second + 1e-10) {
            r.warnings.push_back("lambda(V) is not decreasing between V = " +
                                 std::to_string(seen[i - 1].first) + " and V = " +
                                 std::to_string(seen[i].first));
            break;
        }
    }
    if (!(std::abs(fmid) <= opts.tolerance))
        throw ConvergenceError("bisection for lambda(V) = 0 stalled", std::abs(fmid), r.iterations);
    r.v_inf = mid;
    r.lambda_at_root = fmid;
    return r;
}

struct SteadyState {
    RootResult root;
    double vbar = 0.0;
    bool found = false;
    bool exists = false;   // found and V_inf < vbar
    double v_inf = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> rho_inf;
    double tau_u = 0.0;    // int tau U(V_inf) in the discrete consumption form
    std::vector<double> profile;  // U(V_inf; .), unit mass
    std::vector<double> u_inf;    // rho_inf * profile when the state exists
    double center_of_mass = std::numeric_limits<double>::quiet_NaN();
    double outflow = 0.0;         // truncation outflow of the profile, per unit count
};

/// Nontrivial equilibrium. With rho = int u, the monomer equation at rest gives
///     rho (V int tau U - R(U)) = lambda - gamma V
/// (R the small-fragment monomer return, zero when x0 = 0), which is positive iff V < lambda/gamma.
inline SteadyState build_steady_state(const DiscreteModel& model, const RootOptions& opts = {}) {
    SteadyState ss;
    ss.vbar = model.coeffs().vbar();
    ss.root = find_v_inf(model, opts);
    if (!ss.root.v_inf || *ss.root.v_inf == 0.0) return ss;
    ss.found = true;
    ss.v_inf = *ss.root.v_inf;
    const auto eig = principal_eigenpair(model, ss.v_inf, opts.eigen);
    ss.profile = eig.u;
    ss.outflow = eig.outflow;
    ss.tau_u = model.consumption(ss.profile);
    const auto& g = model.grid();
    ss.center_of_mass = integrate_first_moment(g, ss.profile) / integrate(g, ss.profile);
    ss.exists = ss.v_inf < ss.vbar;
    if (ss.exists) {
        const auto& c = model.coeffs();
        const double denom = ss.v_inf * ss.tau_u - model.monomer_return(ss.profile);
        const double rho = (c.lambda - c.gamma * ss.v_inf) / denom;
        if (rho > 0.0) {
            ss.rho_inf = rho;
            ss.u_inf = ss.profile;
            for (double& x : ss.u_inf) x *= rho;
        } else {
            ss.exists = false;
        }
    }
    return ss;
}

struct ProfileCheck {
    double ode_residual = 0.0;        // |V(tau u)'' + ((mu0 + beta0 x) u)' + 2 beta0 u|, relative
    double left_value = 0.0;          // u(x0) / max u, from linear extrapolation
    double left_flux_mismatch = 0.0;  // |V (tau u)'(x0) - 2 beta0 int u| / (2 beta0 int u)
    double moment_relation = 0.0;     // |V int tau u - mu0 int x u| / (mu0 int x u)
};

/// Checks the stationary profile against the second-order ODE obtained by differentiating
/// the stationary equation once in x, for mu constant, beta = beta0 x, x0 = 0.
inline ProfileCheck stationary_profile_check(const DiscreteModel& model, const SteadyState& ss) {
    const auto& c = model.coeffs();
    if (!is_constant(c.mu) || !is_linear_through_origin(c.beta) || c.x0 != 0.0)
        throw UnsupportedConfiguration(
            "stationary profile check needs constant mu, beta = beta0 x and x0 = 0");
    if (!ss.exists || ss.u_inf.empty())
        throw DomainError("stationary profile check needs an existing steady state");
    const double mu0 = std::get<Constant>(c.mu).value;
    const double beta0 = std::get<Affine>(c.beta).slope;
    const auto& g = model.grid();
    const auto& u = ss.u_inf;
    const auto& tau = model.samples().tau;
    const std::size_t n = u.size();
    const double v = ss.v_inf;

    std::vector<double> f(n), q(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = tau[i] * u[i];
        q[i] = (mu0 + beta0 * g.center(i)) * u[i];
    }
    double res = 0.0, scale = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double xl = g.center(i - 1), xc = g.center(i), xr = g.center(i + 1);
        const double d2 = 2.0 * ((f[i + 1] - f[i]) / (xr - xc) - (f[i] - f[i - 1]) / (xc - xl)) /
                          (xr - xl);
        const double d1 = (q[i + 1] - q[i - 1]) / (xr - xl);
        res += std::abs(v * d2 + d1 + 2.0 * beta0 * u[i]) * g.width(i);
        scale += 2.0 * beta0 * u[i] * g.width(i);
    }
    ProfileCheck pc;
    pc.ode_residual = res / scale;
    const double umax = *std::max_element(u.begin(), u.end());
    const double slope = (u[1] - u[0]) / (g.edges()[2] - g.edges()[1]);
    pc.left_value = std::abs(u[0] + slope * (g.x0() - g.edges()[1])) / umax;
    {
        // Upwind fluxes tau_i u_i live on the right cell edges; differentiate the quadratic
        // through (x0, 0), (e1, f0), (e2, f1) at x0.
        const double x0 = g.x0(), x1 = g.edges()[1], x2 = g.edges()[2];
        const double d = f[0] * (x2 - x0) / ((x1 - x0) * (x2 - x1)) -
                         f[1] * (x1 - x0) / ((x2 - x0) * (x2 - x1));
        const double target = 2.0 * beta0 * integrate(g, u);
        pc.left_flux_mismatch = std::abs(v * d - target) / target;
    }
    const double xmass = integrate_first_moment(g, u);
    pc.moment_relation = std::abs(v * model.consumption(u) - mu0 * xmass) / (mu0 * xmass);
    return pc;
}

struct Mode {
    std::size_t index = 0;
    double location = 0.0;
    double height = 0.0;
    double prominence = 0.0;
};

/// Local maxima of a profile after 3-point moving-average smoothing, kept when their
/// topographic prominence reaches `rel_prominence * max`. A profile decreasing from x0 has a
/// mode at the first cell; the two cells next to xmax are never reported.
inline std::vector<Mode> detect_modes(const SizeGrid& g, std::span<const double> u,
                                      double rel_prominence = 0.01) {
    const std::size_t n = u.size();
    std::vector<Mode> modes;
    if (n < 5) return modes;
    std::vector<double> s(n);
    s[0] = u[0];
    s[n - 1] = u[n - 1];
    for (std::size_t i = 1; i + 1 < n; ++i) s[i] = (u[i - 1] + u[i] + u[i + 1]) / 3.0;
    const double top = *std::max_element(s.begin(), s.end());
    if (!(top > 0.0)) return modes;
    for (std::size_t i = 0; i + 2 < n; ++i) {
        if (i > 0 && !(s[i] > s[i - 1])) continue;
        // plateau-aware: walk right across equal values
        std::size_t j = i;
        while (j + 1 < n && s[j + 1] == s[i]) ++j;
        if (j + 1 >= n || !(s[j + 1] < s[i])) continue;
        const std::size_t peak = i;
        double left_min = s[peak];
        std::size_t k = peak;
        while (k > 0) {
            --k;
            if (s[k] > s[peak]) break;
            left_min = std::min(left_min, s[k]);
        }
        double right_min = s[peak];
        k = j;
        while (k + 1 < n) {
            ++k;
            if (s[k] > s[peak]) break;
            right_min = std::min(right_min, s[k]);
        }
        // A peak at x0 has no left flank; its prominence is the drop to the right.
        const double prom = s[peak] - (peak == 0 ? right_min : std::max(left_min, right_min));
        if (j + 2 >= n) continue;
        if (prom >= rel_prominence * top)
            modes.push_back({peak, g.center(peak), s[peak], prom});
        i = j;
    }
    return modes;
}

struct BimodalityReport {
    std::size_t n_modes = 0;
    std::vector<double> mode_locations;
    std::vector<Mode> modes;
    bool convex_critical_point = false;     // an interior dip between two modes
    std::optional<double> dip_location;
    bool condition_applicable = false;      // mu constant and beta = beta0 x
    bool necessary_condition_met = false;   // V_inf * inf tau'' < -3 beta0
    double v_inf_min_tau_second = 0.0;
    double minus_three_beta0 = 0.0;
    std::vector<double> potential;          // psi at cell centers (when applicable)
    double center_of_mass = 0.0;
    double split_strength = 0.0;            // mass fraction on the lighter side of the dip
};

inline BimodalityReport bimodality_report(const DiscreteModel& model, double v_inf,
                                          std::span<const double> u) {
    const auto& g = model.grid();
    const auto& c = model.coeffs();
    BimodalityReport r;
    r.modes = detect_modes(g, u);
    r.n_modes = r.modes.size();
    for (const auto& m : r.modes) r.mode_locations.push_back(m.location);
    r.center_of_mass = integrate_first_moment(g, u) / integrate(g, u);

    if (r.n_modes >= 2) {
        auto by_height = r.modes;
        std::sort(by_height.begin(), by_height.end(),
                  [](const Mode& a, const Mode& b) { return a.height > b.height; });
        std::size_t a = std::min(by_height[0].index, by_height[1].index);
        std::size_t b = std::max(by_height[0].index, by_height[1].index);
        std::size_t dip = a;
        for (std::size_t i = a; i <= b; ++i)
            if (u[i] < u[dip]) dip = i;
        r.convex_critical_point = true;
        r.dip_location = g.center(dip);
        double left = 0.0, total = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            total += u[i] * g.width(i);
            if (i < dip) left += u[i] * g.width(i);
        }
        left += 0.5 * u[dip] * g.width(dip);
        r.split_strength = std::min(left, total - left) / total;
    }

    if (is_constant(c.mu) && is_linear_through_origin(c.beta)) {
        r.condition_applicable = true;
        const double mu0 = std::get<Constant>(c.mu).value;
        const double beta0 = std::get<Affine>(c.beta).slope;
        std::vector<double> pts(g.centers().begin(), g.centers().end());
        const double tpp = min_second_derivative(c.tau, pts, g.x0(), g.xmax());
        r.v_inf_min_tau_second = v_inf * tpp;
        r.minus_three_beta0 = -3.0 * beta0;
        r.necessary_condition_met = r.v_inf_min_tau_second < r.minus_three_beta0;
        r.potential.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = g.center(i);
            r.potential[i] = v_inf * evaluate(c.tau, x) + mu0 * x + 0.5 * beta0 * x * x;
        }
    }
    return r;
}

}  // namespace prion
