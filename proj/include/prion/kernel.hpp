#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "prion/coefficients.hpp"
#include "prion/grid.hpp"

namespace prion {

/// Discrete uniform fragmentation kernel.
///
/// Column j describes where the fragments of a parent in cell j land. Starting from the
/// midpoint weights width_i / c_j on the strictly smaller cells i < j, each column is rescaled
/// by an affine factor (a_j + b_j c_i) chosen so that
///
///     sum_i W_ij       = 1 - x0/c_j               (fragment count)
///     sum_i c_i W_ij   = (c_j^2 - x0^2) / (2 c_j) (fragment mass)
///
/// hold to rounding. A column with fewer than two smaller cells, or whose corrected weights
/// would turn negative, cannot honour both laws; it is marked inactive and parents in that
/// cell do not fragment. With x0 = 0 this affects cells 0 and 1 only.
///
/// The affine factor keeps the table separable, so the gain term applies in O(n).
class FragmentKernel {
public:
    FragmentKernel() = default;

    FragmentKernel(const SizeGrid& grid, double x0) : x0_(x0) {
        const std::size_t n = grid.size();
        a_.assign(n, 0.0);
        b_.assign(n, 0.0);
        alpha_.assign(n, 0.0);
        beta_.assign(n, 0.0);
        mean_.assign(n, 0.0);
        active_.assign(n, false);
        centers_.assign(grid.centers().begin(), grid.centers().end());
        widths_.assign(grid.widths().begin(), grid.widths().end());
        for (std::size_t j = 1; j < n; ++j) solve_column(j);
    }

    std::size_t size() const noexcept { return a_.size(); }
    bool active(std::size_t j) const { return active_[j]; }
    double scale_a(std::size_t j) const { return a_[j]; }
    double scale_b(std::size_t j) const { return b_[j]; }
    double x0() const noexcept { return x0_; }

    /// Target moments of column j (what the analytic kernel gives on (x0, c_j)).
    double target_count(std::size_t j) const {
        return UniformKernel::polymer_fraction(centers_[j], x0_);
    }
    double target_mass(std::size_t j) const {
        return UniformKernel::polymer_first_moment(centers_[j], x0_);
    }

    /// Monomers returned to the pool per fragmentation event of a parent in cell j:
    /// parent mass minus the mass of the two polymer fragments.
    double monomer_return(std::size_t j) const {
        return active_[j] ? centers_[j] - 2.0 * target_mass(j) : 0.0;
    }

    /// W_ij: fraction of fragments from parent cell j landing in cell i.
    double weight(std::size_t i, std::size_t j) const {
        if (i >= j || !active_[j]) return 0.0;
        return widths_[i] / centers_[j] * (alpha_[j] + beta_[j] * (centers_[i] - mean_[j]));
    }

    Eigen::MatrixXd dense_table() const {
        const std::size_t n = size();
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                  static_cast<Eigen::Index>(n));
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < j; ++i)
                w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = weight(i, j);
        return w;
    }

    /// gain_i = (2 / width_i) sum_{j>i} W_ij * rate_j * u_j * width_j, accumulated into `out`.
    void add_gain(std::span<const double> rate, std::span<const double> u,
                  std::span<double> out) const {
        const std::size_t n = size();
        double sa = 0.0;
        double sb = 0.0;
        for (std::size_t k = n; k-- > 0;) {
            out[k] += 2.0 * (sa + centers_[k] * sb);
            if (active_[k]) {
                const double q = rate[k] * u[k] * widths_[k] / centers_[k];
                sa += a_[k] * q;
                sb += b_[k] * q;
            }
        }
    }

    /// Adjoint gain with respect to the width-weighted inner product:
    /// out_j += 2 rate_j sum_{i<j} W_ij phi_i.
    void add_adjoint_gain(std::span<const double> rate, std::span<const double> phi,
                          std::span<double> out) const {
        const std::size_t n = size();
        double s0 = 0.0;
        double s1 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (active_[j]) out[j] += 2.0 * rate[j] * (a_[j] * s0 + b_[j] * s1) / centers_[j];
            s0 += widths_[j] * phi[j];
            s1 += widths_[j] * centers_[j] * phi[j];
        }
    }

private:
    void solve_column(std::size_t j) {
        const double y = centers_[j];
        if (j < 2 || y <= x0_) return;
        // Centered two-pass form of the 2x2 moment system: the factor is
        // alpha + beta (c_i - mean) with mean the weighted mean of the smaller centers.
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < j; ++i) {
            const double w = widths_[i] / y;
            s0 += w;
            s1 += w * centers_[i];
        }
        const double mean = s1 / s0;
        double var = 0.0;
        for (std::size_t i = 0; i < j; ++i) {
            const double d = centers_[i] - mean;
            var += widths_[i] / y * d * d;
        }
        if (!(var > 0.0)) return;
        const double m0 = target_count(j);
        const double m1 = target_mass(j);
        const double alpha = m0 / s0;
        const double beta = (m1 - mean * m0) / var;
        for (std::size_t i = 0; i < j; ++i)
            if (alpha + beta * (centers_[i] - mean) < 0.0) return;
        alpha_[j] = alpha;
        beta_[j] = beta;
        mean_[j] = mean;
        a_[j] = alpha - beta * mean;
        b_[j] = beta;
        active_[j] = true;
    }

    double x0_ = 0.0;
    std::vector<double> a_;
    std::vector<double> b_;
    std::vector<double> alpha_;
    std::vector<double> beta_;
    std::vector<double> mean_;
    std::vector<bool> active_;
    std::vector<double> centers_;
    std::vector<double> widths_;
};

}  // namespace prion
