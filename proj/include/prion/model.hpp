#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prion/coefficients.hpp"
#include "prion/error.hpp"
#include "prion/grid.hpp"
#include "prion/kernel.hpp"

namespace prion {

/// tau, beta, mu evaluated at cell centers.
struct SampledCoefficients {
    std::vector<double> tau;
    std::vector<double> beta;
    std::vector<double> mu;
};

inline SampledCoefficients eval_coefficients(const CoefficientSet& coeffs, const SizeGrid& grid) {
    SampledCoefficients out;
    const std::size_t n = grid.size();
    out.tau.resize(n);
    out.beta.resize(n);
    out.mu.resize(n);
    auto sample = [&](const Shape& shape, std::vector<double>& dst, const char* name) {
        for (std::size_t i = 0; i < n; ++i) {
            const double x = grid.center(i);
            const double v = evaluate(shape, x);
            if (!(v >= 0.0)) throw CoefficientError(name, x, v);
            dst[i] = v;
        }
    };
    sample(coeffs.tau, out.tau, "tau");
    sample(coeffs.beta, out.beta, "beta");
    sample(coeffs.mu, out.mu, "mu");
    return out;
}

/// Default truncation bound 10 * mu(x0) / beta0 for coefficients with beta = beta0 * x (+ beta1).
/// Returns nothing when the rule does not apply and xmax must be configured explicitly.
inline std::optional<double> default_xmax(const CoefficientSet& coeffs) {
    const auto* aff = std::get_if<Affine>(&coeffs.beta);
    if (aff == nullptr || !(aff->slope > 0.0)) return std::nullopt;
    const double mu0 = evaluate(coeffs.mu, coeffs.x0);
    if (!(mu0 > 0.0)) return std::nullopt;
    return coeffs.x0 + 10.0 * mu0 / aff->slope;
}

/// Coefficients paired with a grid: sampled rates and the discrete kernel. Immutable.
class DiscreteModel {
public:
    DiscreteModel(CoefficientSet coeffs, std::shared_ptr<const SizeGrid> grid)
        : coeffs_(std::move(coeffs)), grid_(std::move(grid)) {
        coeffs_.validate();
        if (grid_->x0() != coeffs_.x0)
            throw DomainError("grid x0 does not match the coefficient set x0");
        samples_ = eval_coefficients(coeffs_, *grid_);
        kernel_ = FragmentKernel(*grid_, coeffs_.x0);
        beta_active_.resize(grid_->size());
        for (std::size_t j = 0; j < grid_->size(); ++j)
            beta_active_[j] = kernel_.active(j) ? samples_.beta[j] : 0.0;
    }

    DiscreteModel(CoefficientSet coeffs, const SizeGrid& grid)
        : DiscreteModel(std::move(coeffs), std::make_shared<const SizeGrid>(grid)) {}

    const CoefficientSet& coeffs() const noexcept { return coeffs_; }
    const SizeGrid& grid() const noexcept { return *grid_; }
    std::shared_ptr<const SizeGrid> grid_ptr() const noexcept { return grid_; }
    const SampledCoefficients& samples() const noexcept { return samples_; }
    const FragmentKernel& kernel() const noexcept { return kernel_; }
    std::size_t size() const noexcept { return grid_->size(); }

    /// Fragmentation rate actually applied per cell (zero in inactive kernel columns).
    std::span<const double> beta_effective() const noexcept { return beta_active_; }

    /// Conversion functional  sum_i tau_i u_i l_i  with l the transfer lengths. Equals the
    /// midpoint rule on uniform grids; it is the monomer consumption the transport scheme
    /// actually performs, so the discrete mass balance closes exactly.
    double consumption(std::span<const double> u) const {
        const auto len = grid_->transfer_lengths();
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s += samples_.tau[i] * u[i] * len[i];
        return s;
    }

    /// Monomers returned by fragments smaller than x0 (zero when x0 = 0).
    double monomer_return(std::span<const double> u) const {
        if (coeffs_.x0 == 0.0) return 0.0;
        double s = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j)
            s += beta_active_[j] * u[j] * grid_->width(j) * kernel_.monomer_return(j);
        return s;
    }

private:
    CoefficientSet coeffs_;
    std::shared_ptr<const SizeGrid> grid_;
    SampledCoefficients samples_;
    FragmentKernel kernel_;
    std::vector<double> beta_active_;
};

struct Moments {
    double count = 0.0;  // U
    double mass = 0.0;   // P
};

/// Monomer level V and grid-aligned polymer density u at time t.
struct PolymerState {
    double t = 0.0;
    double v = 0.0;
    std::vector<double> u;
    std::shared_ptr<const SizeGrid> grid;

    PolymerState() = default;
    PolymerState(std::shared_ptr<const SizeGrid> g, double v0, std::vector<double> density,
                 double time = 0.0)
        : t(time), v(v0), u(std::move(density)), grid(std::move(g)) {
        if (grid == nullptr) throw DomainError("state needs a grid");
        if (u.size() != grid->size()) throw DomainError("density size does not match the grid");
    }
};

inline Moments moments(const PolymerState& state) {
    return {integrate(*state.grid, state.u), integrate_first_moment(*state.grid, state.u)};
}

/// Cell-average density of f over each cell, by 8-point Gauss-Legendre per cell.
template <class F>
std::vector<double> project(const SizeGrid& grid, F&& f) {
    static constexpr double nodes[4] = {0.1834346424956498, 0.5255324099163290,
                                        0.7966664774136267, 0.9602898564975363};
    static constexpr double weights[4] = {0.3626837833783620, 0.3137066458778873,
                                          0.2223810344533745, 0.1012285362903763};
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double mid = grid.center(i);
        const double half = 0.5 * grid.width(i);
        double s = 0.0;
        for (int k = 0; k < 4; ++k)
            s += weights[k] * (f(mid - half * nodes[k]) + f(mid + half * nodes[k]));
        out[i] = 0.5 * s;
    }
    return out;
}

}  // namespace prion
