#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prion/error.hpp"
#include "prion/model.hpp"
#include "prion/operator.hpp"
#include "prion/parallel.hpp"

namespace prion {

// Sign convention: lambda is the loss-side eigenvalue of
//     V d/dx(tau U) + (mu + beta) U - 2 int beta kappa U = lambda U,
// i.e. lambda = -s(L_V) for the generator L_V. Populations grow like exp(-lambda t);
// growth_rate() = -lambda is what user-facing output reports.

struct EigenOptions {
    double rel_tol = 1e-10;  // residual tolerance relative to ||L_V||
    int max_iterations = 200;
};

struct IterationRecord {
    double shift = 0.0;     // Collatz-Wielandt upper bound for s(L_V) after this step
    double residual = 0.0;  // weighted l1 norm of (L_V - s) v with int v = 1
};

enum class PhiNormalization { AtX0, Paired };

struct EigenSolution {
    double v = 0.0;
    double lambda = 0.0;
    std::vector<double> u;  // int u dx = 1; empty when degenerate
    double residual = 0.0;
    double tolerance = 0.0;
    int iterations = 0;
    bool degenerate = false;  // V = 0: value from the moment identity, no eigenvector
    double outflow = 0.0;     // polymers per unit time leaving through xmax (per unit mass)
    std::vector<IterationRecord> log;

    double growth_rate() const { return -lambda; }
};

struct AdjointSolution {
    double v = 0.0;
    double lambda = 0.0;
    std::vector<double> phi;  // phi(x0) = 1 (linear extrapolation to the left edge)
    PhiNormalization normalization = PhiNormalization::AtX0;
    double pairing = 0.0;     // <phi, U> with int U = 1; divide phi by it for <phi, U> = 1
    double residual = 0.0;
    int iterations = 0;
    std::vector<IterationRecord> log;
};

namespace closed_form {

/// Constant tau0, mu0 and beta = beta0 x:  lambda(V) = mu0 - sqrt(tau0 beta0 V).
inline double constant_lambda(double tau0, double beta0, double mu0, double v) {
    return mu0 - std::sqrt(tau0 * beta0 * v);
}

/// Length scale of the affine adjoint phi = 1 + x/L and of the eigenvector U(x) ~ Phi(x/L).
inline double constant_length(double tau0, double beta0, double v) {
    return std::sqrt(tau0 * v / beta0);
}

/// V at which the constant-coefficient lambda vanishes: mu0^2 / (tau0 beta0).
inline double constant_v_inf(double tau0, double beta0, double mu0) {
    return mu0 * mu0 / (tau0 * beta0);
}

/// beta = beta1 + beta0 x, tau = tau0 + tau1 x, mu = mu0: Z = lambda - mu0 is the root of
/// (Z + beta1)(Z + V tau1) = V tau0 beta0 with Z < -V tau1.
inline double affine_lambda(double beta1, double beta0, double tau0, double tau1, double mu0,
                            double v) {
    const double p = beta1 + v * tau1;
    const double q = beta1 * v * tau1 - v * tau0 * beta0;
    const double disc = p * p - 4.0 * q;
    const double z = 0.5 * (-p - std::sqrt(disc));
    return mu0 + z;
}

/// Unit-mass profile U(x) = (2/L) Phi(x/L), Phi(r) = (r + r^2/2) exp(-r - r^2/2).
inline double constant_profile(double x, double length) {
    const double r = x / length;
    return 2.0 / length * (r + 0.5 * r * r) * std::exp(-r - 0.5 * r * r);
}

}  // namespace closed_form

namespace detail {

inline double weighted_l1(const SizeGrid& g, std::span<const double> a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i]) * g.width(i);
    return s;
}

/// Induced norm of the operator on (R^n, sum |.| h): max_j sum_i |A_ij| h_i / h_j.
inline double weighted_norm(const RowMatrix& a, const SizeGrid& g) {
    double best = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            s += std::abs(a(i, j)) * g.width(static_cast<std::size_t>(i));
        best = std::max(best, s / g.width(static_cast<std::size_t>(j)));
    }
    return best;
}

/// Upper bound for the spectral abscissa of a Metzler matrix: the largest weighted column sum.
inline double column_sum_bound(const RowMatrix& a, const SizeGrid& g) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            s += a(i, j) * g.width(static_cast<std::size_t>(i));
        best = std::max(best, s / g.width(static_cast<std::size_t>(j)));
    }
    return best;
}

inline void normalize_mass(const SizeGrid& g, std::vector<double>& v) {
    const double m = integrate(g, v);
    for (double& x : v) x /= m;
}

struct NodaOutcome {
    double shift = 0.0;
    std::vector<double> vec;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::vector<IterationRecord> log;
};

/// Shifted inverse iteration with Noda's shift update for the Perron root of a Metzler matrix.
///
/// Each step solves (sigma - A) w = v with sigma above the spectral abscissa s, so w > 0, and
/// moves sigma to max_i (A w)_i / w_i = sigma - min_i v_i / w_i, which is again an upper
/// bound for s (Collatz-Wielandt). Convergence is locally quadratic. `solve(sigma, v)` returns
/// nothing when the factorization certifies sigma <= s.
template <class Solve, class Apply>
NodaOutcome noda_iteration(const SizeGrid& g, double sigma0, double tol, int max_iterations,
                           Solve&& solve, Apply&& apply) {
    const std::size_t n = g.size();
    NodaOutcome out;
    std::vector<double> v(n, 1.0);
    normalize_mass(g, v);
    double sigma = sigma0;
    const double tiny = 1e-280;
    std::vector<double> av(n);

    for (int it = 1; it <= max_iterations; ++it) {
        std::optional<std::vector<double>> w = solve(sigma, v);
        if (!w) break;
        double wmax = 0.0;
        double wmin = 0.0;
        for (double x : *w) {
            wmax = std::max(wmax, x);
            wmin = std::min(wmin, x);
        }
        if (!(wmax > 0.0) || wmin < -1e-13 * wmax) break;  // rounding floor reached
        double step = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if ((*w)[i] > tiny && v[i] > tiny) step = std::min(step, v[i] / (*w)[i]);
        for (double& x : *w) x = std::max(x, 0.0);
        normalize_mass(g, *w);
        const double next = sigma - step;
        apply(*w, av);
        for (std::size_t i = 0; i < n; ++i) av[i] -= next * (*w)[i];
        const double res = weighted_l1(g, av);

        out.iterations = it;
        out.log.push_back({next, res});
        if (res <= out.residual || out.vec.empty()) {
            out.shift = next;
            out.vec = *w;
            out.residual = res;
        }
        v = std::move(*w);
        sigma = next;
        if (res <= tol && step <= 1e-13 * std::max(1.0, std::abs(sigma))) break;
    }
    return out;
}

}  // namespace detail

inline EigenSolution principal_eigenpair(const DiscreteModel& model, double v,
                                         const EigenOptions& opts = {}) {
    if (!(v >= 0.0)) throw DomainError("monomer level V must be >= 0");
    EigenSolution sol;
    sol.v = v;
    if (v == 0.0) {
        // Degenerate transport: testing against x gives int x mu U = lambda int x U with the
        // eigenfunction concentrating at the left edge, so lambda(0) = mu(x0).
        sol.lambda = evaluate(model.coeffs().mu, model.coeffs().x0);
        sol.degenerate = true;
        return sol;
    }
    const FragOperator op(model, v);
    const RowMatrix a = op.dense();
    const auto& g = model.grid();
    const double norm = detail::weighted_norm(a, g);
    sol.tolerance = opts.rel_tol * std::max(norm, std::numeric_limits<double>::min());
    const double bound = detail::column_sum_bound(a, g);
    const double sigma0 = bound + 1e-3 * norm + 1e-12;

    auto solve = [&](double sigma,
                     const std::vector<double>& rhs) -> std::optional<std::vector<double>> {
        ShiftedHessenbergLU lu(a, sigma);
        if (!lu.ok()) return std::nullopt;
        return lu.solve(rhs);
    };
    auto apply = [&](const std::vector<double>& x, std::vector<double>& y) { op.apply(x, y); };

    auto out = detail::noda_iteration(g, sigma0, sol.tolerance, opts.max_iterations, solve, apply);
    sol.iterations = out.iterations;
    sol.log = std::move(out.log);
    sol.residual = out.residual;
    if (out.vec.empty() || !(out.residual <= sol.tolerance))
        throw ConvergenceError("principal eigenpair did not converge at V = " + std::to_string(v),
                               out.residual, out.iterations);
    const double vmax = *std::max_element(out.vec.begin(), out.vec.end());
    for (double x : out.vec)
        if (x < -1e-12 * vmax) throw PositivityError("principal eigenvector has negative entries");
    sol.lambda = -out.shift;
    sol.u = std::move(out.vec);
    sol.outflow = op.outflow(sol.u);
    return sol;
}

namespace detail {
inline double value_at_left_edge(const SizeGrid& g, std::span<const double> f) {
    const double slope = (f[1] - f[0]) / (g.center(1) - g.center(0));
    const double at = f[0] + slope * (g.x0() - g.center(0));
    return at > 0.0 ? at : f[0];
}
}  // namespace detail

inline AdjointSolution adjoint_eigenpair(const DiscreteModel& model, double v,
                                         const EigenOptions& opts = {}) {
    if (!(v > 0.0)) throw DomainError("adjoint eigenpair needs V > 0");
    const FragOperator op(model, v);
    const AdjointOperator adj(model, v);
    const RowMatrix a = op.dense();
    const auto& g = model.grid();
    const std::size_t n = g.size();
    const double norm = detail::weighted_norm(a, g);
    const double tol = opts.rel_tol * norm;
    const double sigma0 = detail::column_sum_bound(a, g) + 1e-3 * norm + 1e-12;

    // (sigma - L*) phi = r  <=>  (sigma - L)^T (h phi) = h r
    auto solve = [&](double sigma,
                     const std::vector<double>& rhs) -> std::optional<std::vector<double>> {
        ShiftedHessenbergLU lu(a, sigma);
        if (!lu.ok()) return std::nullopt;
        std::vector<double> hr(n);
        for (std::size_t i = 0; i < n; ++i) hr[i] = g.width(i) * rhs[i];
        auto w = lu.solve_transpose(hr);
        for (std::size_t i = 0; i < n; ++i) w[i] /= g.width(i);
        return w;
    };
    auto apply = [&](const std::vector<double>& x, std::vector<double>& y) { adj.apply(x, y); };

    auto out = detail::noda_iteration(g, sigma0, tol, opts.max_iterations, solve, apply);
    if (out.vec.empty() || !(out.residual <= tol))
        throw ConvergenceError("adjoint eigenpair did not converge at V = " + std::to_string(v),
                               out.residual, out.iterations);
    AdjointSolution sol;
    sol.v = v;
    sol.lambda = -out.shift;
    sol.iterations = out.iterations;
    sol.log = std::move(out.log);
    const double scale = detail::value_at_left_edge(g, out.vec);
    sol.phi = std::move(out.vec);
    for (double& x : sol.phi) {
        if (!(x > 0.0)) throw PositivityError("adjoint eigenvector is not positive");
        x /= scale;
    }
    sol.residual = out.residual / scale;
    const auto primal = principal_eigenpair(model, v, opts);
    double pairing = 0.0;
    for (std::size_t i = 0; i < n; ++i) pairing += sol.phi[i] * primal.u[i] * g.width(i);
    sol.pairing = pairing;
    return sol;
}

/// The two moment identities that follow from integrating the eigenproblem against 1 and x:
///
///     lambda = int (mu - beta) U                                   (count form)
///     lambda = (-V int tau U + int x mu U) / int x U               (mass form)
///
/// evaluated with the discrete quantities the scheme conserves. Boundary losses through xmax
/// enter as `count_flux` and `mass_flux`; adding them back closes both identities to rounding.
struct MomentEigenvalue {
    double count_form = 0.0;
    double mass_form = 0.0;
    double count_flux = 0.0;  // outflow / int U
    double mass_flux = 0.0;   // truncation flux / int x U
    double mean_size = 0.0;   // int x U / int U

    double count_form_closed() const { return count_form + count_flux; }
    double mass_form_closed() const { return mass_form + mass_flux; }
    double truncation_bound() const { return std::max(count_flux, mass_flux); }
};

inline MomentEigenvalue eigenvalue_from_moments(const DiscreteModel& model,
                                                const EigenSolution& sol) {
    if (sol.degenerate || sol.u.empty())
        throw DomainError("moment formula needs a converged, non-degenerate eigenpair");
    const auto& g = model.grid();
    const auto& s = model.samples();
    const auto beta = model.beta_effective();
    const auto& u = sol.u;
    const FragOperator op(model, sol.v);
    double count = 0.0, mass = 0.0, mu_minus_beta = 0.0, xmu = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double h = g.width(i);
        count += u[i] * h;
        mass += g.center(i) * u[i] * h;
        mu_minus_beta += (s.mu[i] - beta[i]) * u[i] * h;
        xmu += g.center(i) * s.mu[i] * u[i] * h;
    }
    MomentEigenvalue m;
    m.count_form = mu_minus_beta / count;
    m.mass_form = (-sol.v * model.consumption(u) + xmu + model.monomer_return(u)) / mass;
    m.count_flux = op.outflow(u) / count;
    m.mass_flux = op.truncation_flux(u) / mass;
    m.mean_size = mass / count;
    return m;
}

struct LambdaScan {
    std::vector<double> v;
    std::vector<double> lambda;
    bool decreasing = true;
    std::optional<double> lambda0_minus_mu0;  // when mu is constant and V = 0 is scanned
    double lambda_at_largest_v = 0.0;
    bool tau_over_x_bounded_below = false;  // min tau(x)/x > 0: lambda -> -infinity as V grows
};

inline LambdaScan scan_lambda(const DiscreteModel& model, std::span<const double> v_list,
                              unsigned threads = 1, const EigenOptions& opts = {}) {
    for (std::size_t i = 0; i < v_list.size(); ++i) {
        if (!(v_list[i] >= 0.0)) throw DomainError("scan V values must be nonnegative");
        if (i > 0 && !(v_list[i] > v_list[i - 1]))
            throw DomainError("scan V values must be strictly increasing");
    }
    LambdaScan scan;
    scan.v.assign(v_list.begin(), v_list.end());
    scan.lambda.resize(v_list.size());
    parallel_for(v_list.size(), threads, [&](std::size_t i) {
        try {
            scan.lambda[i] = principal_eigenpair(model, v_list[i], opts).lambda;
        } catch (const Error& e) {
            throw Error("scan failed at V = " + std::to_string(v_list[i]) + ": " + e.what());
        }
    });
    for (std::size_t i = 1; i < scan.lambda.size(); ++i)
        if (!(scan.lambda[i] < scan.lambda[i - 1] + 1e-10)) scan.decreasing = false;
    if (is_constant(model.coeffs().mu) && !scan.v.empty() && scan.v.front() == 0.0)
        scan.lambda0_minus_mu0 = scan.lambda.front() - std::get<Constant>(model.coeffs().mu).value;
    if (!scan.lambda.empty()) scan.lambda_at_largest_v = scan.lambda.back();
    double min_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < model.size(); ++i)
        min_ratio = std::min(min_ratio, model.samples().tau[i] / model.grid().center(i));
    scan.tau_over_x_bounded_below = min_ratio > 0.0;
    return scan;
}

struct HypothesisConstants {
    double k1 = 0.0;  // sup |tau phi'| / phi
    double k2 = 0.0;  // sup tau / phi
    double k = 0.0;   // inf tau / phi
    double window_end = 0.0;
    bool k_domain_dependent = false;  // inf attained at the window edge
    double lambda = 0.0;
    double v = 0.0;
};

/// Constants bounding tau and tau phi' by the adjoint phi. Evaluated over
/// [x0, x0 + window * (xmax - x0)] to stay clear of the outflow boundary layer.
inline HypothesisConstants hypothesis_constants(const DiscreteModel& model, double v,
                                                double window = 0.8,
                                                const EigenOptions& opts = {}) {
    const auto adj = adjoint_eigenpair(model, v, opts);
    const auto& g = model.grid();
    const auto& tau = model.samples().tau;
    const auto& phi = adj.phi;
    for (double p : phi)
        if (!(p > 0.0)) throw PositivityError("adjoint eigenvector must be positive");
    HypothesisConstants hc;
    hc.v = v;
    hc.lambda = adj.lambda;
    hc.window_end = g.x0() + window * (g.xmax() - g.x0());
    std::size_t last = 0;
    for (std::size_t i = 0; i < g.size() && g.center(i) <= hc.window_end; ++i) last = i;
    hc.k = std::numeric_limits<double>::infinity();
    std::size_t argmin = 0;
    for (std::size_t i = 0; i <= last; ++i) {
        double dphi;
        if (i == 0)
            dphi = (phi[1] - phi[0]) / (g.center(1) - g.center(0));
        else
            dphi = (phi[i + 1] - phi[i - 1]) / (g.center(i + 1) - g.center(i - 1));
        hc.k1 = std::max(hc.k1, std::abs(tau[i] * dphi) / phi[i]);
        const double r = tau[i] / phi[i];
        hc.k2 = std::max(hc.k2, r);
        if (r < hc.k) {
            hc.k = r;
            argmin = i;
        }
    }
    hc.k_domain_dependent = argmin == last;
    return hc;
}

/// Validation route: spectral abscissa of the dense operator from a full eigendecomposition.
inline double dense_spectral_abscissa(const FragOperator& op, std::size_t max_n = 400) {
    if (op.size() > max_n)
        throw UnsupportedConfiguration("dense eigendecomposition limited to n <= " +
                                       std::to_string(max_n));
    const Eigen::MatrixXd a = op.dense();
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0.0, 0);
    return es.eigenvalues().real().maxCoeff();
}

}  // namespace prion
