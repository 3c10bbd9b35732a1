#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "prion/error.hpp"
#include "prion/model.hpp"

namespace prion {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Polymer generator at a fixed monomer level V:
///
///     (L_V u)_i = -(F_{i+1/2} - F_{i-1/2}) / h_i - (mu_i + beta_i) u_i + gain_i(u)
///
/// with first-order upwind fluxes F_{i+1/2} = V tau_i u_i, no inflow at x0 and free outflow
/// at xmax. Off-diagonal entries are nonnegative, so exp(t L_V) preserves positivity.
/// The matrix is upper Hessenberg: transport feeds the next cell, fragments land lower.
class FragOperator {
public:
    FragOperator(const DiscreteModel& model, double v) : model_(&model), v_(v) {
        if (!(v >= 0.0)) throw DomainError("monomer level V must be >= 0");
    }

    double v() const noexcept { return v_; }
    const DiscreteModel& model() const noexcept { return *model_; }
    std::size_t size() const noexcept { return model_->size(); }

    void apply(std::span<const double> u, std::span<double> out) const {
        const auto& g = model_->grid();
        const auto& s = model_->samples();
        const auto beta = model_->beta_effective();
        const std::size_t n = size();
        double inflow = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double flux = v_ * s.tau[i] * u[i];
            out[i] = (inflow - flux) / g.width(i) - (s.mu[i] + beta[i]) * u[i];
            inflow = flux;
        }
        model_->kernel().add_gain(beta, u, out);
    }

    std::vector<double> apply(std::span<const double> u) const {
        std::vector<double> out(size());
        apply(u, out);
        return out;
    }

    /// Number of polymers per unit time leaving through xmax.
    double outflow(std::span<const double> u) const {
        return v_ * model_->samples().tau.back() * u.back();
    }

    /// First-moment (mass) loss rate through xmax: outflow times the ghost-cell center.
    double truncation_flux(std::span<const double> u) const {
        return outflow(u) * model_->grid().ghost_center();
    }

    RowMatrix dense() const {
        const auto& g = model_->grid();
        const auto& s = model_->samples();
        const auto beta = model_->beta_effective();
        const auto& k = model_->kernel();
        const auto n = static_cast<Eigen::Index>(size());
        RowMatrix m = RowMatrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            m(i, i) = -v_ * s.tau[iu] / g.width(iu) - s.mu[iu] - beta[iu];
            if (i > 0) m(i, i - 1) = v_ * s.tau[iu - 1] / g.width(iu);
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                m(i, j) = 2.0 * beta[ju] * k.weight(iu, ju) * g.width(ju) / g.width(iu);
            }
        }
        return m;
    }

private:
    const DiscreteModel* model_;
    double v_;
};

/// Adjoint of FragOperator for the width-weighted inner product <a, b> = sum a_i b_i h_i:
///
///     (L_V^* phi)_i = V tau_i (phi_{i+1} - phi_i) / h_i - (mu_i + beta_i) phi_i
///                     + 2 beta_i sum_{k<i} W_ki phi_k
///
/// with phi = 0 beyond xmax (outflow is lost).
class AdjointOperator {
public:
    AdjointOperator(const DiscreteModel& model, double v) : model_(&model), v_(v) {
        if (!(v >= 0.0)) throw DomainError("monomer level V must be >= 0");
    }

    double v() const noexcept { return v_; }
    std::size_t size() const noexcept { return model_->size(); }

    void apply(std::span<const double> phi, std::span<double> out) const {
        const auto& g = model_->grid();
        const auto& s = model_->samples();
        const auto beta = model_->beta_effective();
        const std::size_t n = size();
        for (std::size_t i = 0; i < n; ++i) {
            const double next = i + 1 < n ? phi[i + 1] : 0.0;
            out[i] = v_ * s.tau[i] * (next - phi[i]) / g.width(i) - (s.mu[i] + beta[i]) * phi[i];
        }
        model_->kernel().add_adjoint_gain(beta, phi, out);
    }

    std::vector<double> apply(std::span<const double> phi) const {
        std::vector<double> out(size());
        apply(phi, out);
        return out;
    }

    RowMatrix dense() const {
        const auto& g = model_->grid();
        RowMatrix m = FragOperator(*model_, v_).dense().transpose();
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                m(i, j) *= g.width(static_cast<std::size_t>(j)) /
                           g.width(static_cast<std::size_t>(i));
        return m;
    }

private:
    const DiscreteModel* model_;
    double v_;
};

struct BalanceResult {
    double moment_rate = 0.0;     // <x, L_V u>
    double expected = 0.0;        // V * consumption - <x mu, u> - monomer return
    double truncation_flux = 0.0; // mass leaving through xmax
    double residual = 0.0;        // moment_rate - expected + truncation_flux
};

/// Discrete form of the polymer part of d/dt (V + P) = lambda - gamma V - int mu x u.
/// The residual vanishes to rounding because the kernel moments are exact.
inline BalanceResult macroscopic_balance(const FragOperator& op, std::span<const double> u) {
    const auto& model = op.model();
    const auto& g = model.grid();
    const auto lu = op.apply(u);
    BalanceResult r;
    r.moment_rate = integrate_first_moment(g, lu);
    double xmu = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        xmu += g.center(i) * model.samples().mu[i] * u[i] * g.width(i);
    r.expected = op.v() * model.consumption(u) - xmu - model.monomer_return(u);
    r.truncation_flux = op.truncation_flux(u);
    r.residual = r.moment_rate - r.expected + r.truncation_flux;
    return r;
}

/// LU factorization of sigma*I - A for upper Hessenberg A, without pivoting.
///
/// For a Metzler A (nonnegative off-diagonals) sigma*I - A is a Z-matrix; all pivots are
/// positive exactly when it is a nonsingular M-matrix, i.e. when sigma exceeds the spectral
/// abscissa of A. `ok()` reports that certificate. O(n^2) time.
class ShiftedHessenbergLU {
public:
    ShiftedHessenbergLU(const RowMatrix& a, double sigma) : lu_(-a), sub_(a.rows(), 0.0) {
        const Eigen::Index n = lu_.rows();
        for (Eigen::Index i = 0; i < n; ++i) lu_(i, i) += sigma;
        for (Eigen::Index k = 0; k < n; ++k) {
            const double pivot = lu_(k, k);
            if (!(pivot > 0.0)) {
                ok_ = false;
                return;
            }
            if (k + 1 < n) {
                const double l = lu_(k + 1, k) / pivot;
                sub_[static_cast<std::size_t>(k)] = l;
                lu_(k + 1, k) = 0.0;
                lu_.row(k + 1).tail(n - k - 1) -= l * lu_.row(k).tail(n - k - 1);
            }
        }
    }

    bool ok() const noexcept { return ok_; }

    /// Solves (sigma I - A) w = rhs.
    std::vector<double> solve(std::span<const double> rhs) const {
        const auto n = static_cast<std::size_t>(lu_.rows());
        std::vector<double> y(rhs.begin(), rhs.end());
        for (std::size_t k = 0; k + 1 < n; ++k) y[k + 1] -= sub_[k] * y[k];
        for (std::size_t i = n; i-- > 0;) {
            double s = y[i];
            const auto ii = static_cast<Eigen::Index>(i);
            for (Eigen::Index j = ii + 1; j < static_cast<Eigen::Index>(n); ++j)
                s -= lu_(ii, j) * y[static_cast<std::size_t>(j)];
            y[i] = s / lu_(ii, ii);
        }
        return y;
    }

    /// Solves (sigma I - A)^T w = rhs.
    std::vector<double> solve_transpose(std::span<const double> rhs) const {
        const auto n = static_cast<std::size_t>(lu_.rows());
        std::vector<double> z(rhs.begin(), rhs.end());
        // U^T z = rhs, processed by rows of U so memory access stays contiguous.
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            z[i] /= lu_(ii, ii);
            const double zi = z[i];
            for (Eigen::Index j = ii + 1; j < static_cast<Eigen::Index>(n); ++j)
                z[static_cast<std::size_t>(j)] -= lu_(ii, j) * zi;
        }
        for (std::size_t k = n - 1; k-- > 0;) z[k] -= sub_[k] * z[k + 1];
        return z;
    }

private:
    RowMatrix lu_;
    std::vector<double> sub_;
    bool ok_ = true;
};

}  // namespace prion
