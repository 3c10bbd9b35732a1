#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "prion/error.hpp"

namespace prion {

enum class Spacing { Uniform, Geometric };

/// Finite-volume partition of the truncated size axis [x0, xmax] into n cells.
class SizeGrid {
public:
    static SizeGrid uniform(double x0, double xmax, std::size_t n) {
        check(x0, xmax, n);
        std::vector<double> edges(n + 1);
        const double h = (xmax - x0) / static_cast<double>(n);
        for (std::size_t i = 0; i <= n; ++i) edges[i] = x0 + h * static_cast<double>(i);
        edges[n] = xmax;
        return SizeGrid(std::move(edges), Spacing::Uniform, 1.0);
    }

    /// Cell widths grow by `ratio` from left to right.
    static SizeGrid geometric(double x0, double xmax, std::size_t n, double ratio) {
        check(x0, xmax, n);
        if (!(ratio > 0.0)) throw DomainError("geometric grid ratio must be > 0");
        if (ratio == 1.0) {
            SizeGrid g = uniform(x0, xmax, n);
            g.spacing_ = Spacing::Geometric;
            return g;
        }
        const double first =
            (xmax - x0) * (ratio - 1.0) / (std::pow(ratio, static_cast<double>(n)) - 1.0);
        std::vector<double> edges(n + 1);
        edges[0] = x0;
        double h = first;
        for (std::size_t i = 0; i < n; ++i) {
            edges[i + 1] = edges[i] + h;
            h *= ratio;
        }
        edges[n] = xmax;
        return SizeGrid(std::move(edges), Spacing::Geometric, ratio);
    }

    double x0() const noexcept { return edges_.front(); }
    double xmax() const noexcept { return edges_.back(); }
    std::size_t size() const noexcept { return centers_.size(); }
    Spacing spacing() const noexcept { return spacing_; }
    double ratio() const noexcept { return ratio_; }

    std::span<const double> edges() const noexcept { return edges_; }
    std::span<const double> centers() const noexcept { return centers_; }
    std::span<const double> widths() const noexcept { return widths_; }
    double center(std::size_t i) const { return centers_[i]; }
    double width(std::size_t i) const { return widths_[i]; }

    /// Center-to-center distance to the next cell; the last cell uses a ghost neighbor
    /// one width further out. These are the distances polymers travel between cells.
    std::span<const double> transfer_lengths() const noexcept { return transfer_; }

    /// Center of the ghost cell beyond xmax that receives the outflow.
    double ghost_center() const { return centers_.back() + transfer_.back(); }

    /// FNV-1a over the edge coordinates; stable across platforms with IEEE doubles.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (double e : edges_) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &e, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ULL;
            }
        }
        return h;
    }

private:
    SizeGrid(std::vector<double> edges, Spacing spacing, double ratio)
        : edges_(std::move(edges)), spacing_(spacing), ratio_(ratio) {
        const std::size_t n = edges_.size() - 1;
        centers_.resize(n);
        widths_.resize(n);
        transfer_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            widths_[i] = edges_[i + 1] - edges_[i];
            centers_[i] = 0.5 * (edges_[i] + edges_[i + 1]);
        }
        for (std::size_t i = 0; i + 1 < n; ++i) transfer_[i] = centers_[i + 1] - centers_[i];
        transfer_[n - 1] = widths_[n - 1];
    }

    static void check(double x0, double xmax, std::size_t n) {
        if (n < 3) throw DomainError("grid needs at least 3 cells");
        if (!(x0 >= 0.0)) throw DomainError("grid x0 must be >= 0");
        if (!(xmax > x0)) throw DomainError("grid xmax must exceed x0");
    }

    std::vector<double> edges_;
    std::vector<double> centers_;
    std::vector<double> widths_;
    std::vector<double> transfer_;
    Spacing spacing_;
    double ratio_;
};

/// Midpoint quadrature  sum_i f_i * width_i.
inline double integrate(const SizeGrid& grid, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * grid.width(i);
    return s;
}

/// sum_i x_i * f_i * width_i
inline double integrate_first_moment(const SizeGrid& grid, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += grid.center(i) * f[i] * grid.width(i);
    return s;
}

}  // namespace prion
