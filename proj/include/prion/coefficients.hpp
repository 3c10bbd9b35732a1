#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "prion/error.hpp"

namespace prion {

// Size-dependent rate shapes. Each can be used for tau, beta or mu.

struct Constant {
    double value = 0.0;
};

/// intercept + slope * x
struct Affine {
    double intercept = 0.0;
    double slope = 0.0;
};

/// base + amplitude * exp(-(x - center)^2 / sigma^2)
struct Bell {
    double base = 0.0;
    double amplitude = 0.0;
    double center = 0.0;
    double sigma = 1.0;
};

/// base + alpha * g(alpha * (x - center)), g the standard normal density.
/// The bell keeps unit area while alpha controls its concentration.
struct ScaledBell {
    double base = 0.0;
    double alpha = 1.0;
    double center = 0.0;
};

using Shape = std::variant<Constant, Affine, Bell, ScaledBell>;

namespace detail {
inline double standard_normal_density(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}
}  // namespace detail

inline double evaluate(const Shape& shape, double x) {
    return std::visit(
        [x](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Constant>) {
                return s.value;
            } else if constexpr (std::is_same_v<S, Affine>) {
                return s.intercept + s.slope * x;
            } else if constexpr (std::is_same_v<S, Bell>) {
                const double d = x - s.center;
                return s.base + s.amplitude * std::exp(-d * d / (s.sigma * s.sigma));
            } else {
                return s.base + s.alpha * detail::standard_normal_density(s.alpha * (x - s.center));
            }
        },
        shape);
}

inline double derivative(const Shape& shape, double x) {
    return std::visit(
        [x](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Constant>) {
                return 0.0;
            } else if constexpr (std::is_same_v<S, Affine>) {
                return s.slope;
            } else if constexpr (std::is_same_v<S, Bell>) {
                const double d = x - s.center;
                const double s2 = s.sigma * s.sigma;
                return -2.0 * d / s2 * s.amplitude * std::exp(-d * d / s2);
            } else {
                const double z = s.alpha * (x - s.center);
                return -s.alpha * s.alpha * z * detail::standard_normal_density(z);
            }
        },
        shape);
}

inline double second_derivative(const Shape& shape, double x) {
    return std::visit(
        [x](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Constant> || std::is_same_v<S, Affine>) {
                return 0.0;
            } else if constexpr (std::is_same_v<S, Bell>) {
                const double d = x - s.center;
                const double s2 = s.sigma * s.sigma;
                return s.amplitude * std::exp(-d * d / s2) * (4.0 * d * d / (s2 * s2) - 2.0 / s2);
            } else {
                const double z = s.alpha * (x - s.center);
                return s.alpha * s.alpha * s.alpha * (z * z - 1.0) *
                       detail::standard_normal_density(z);
            }
        },
        shape);
}

/// Minimum of the analytic second derivative over [lo, hi], sampled on `points`
/// plus the bell center when it lies in range (where the minimum of a bell sits).
inline double min_second_derivative(const Shape& shape, const std::vector<double>& points, double lo,
                                    double hi) {
    double best = 0.0;
    bool first = true;
    auto consider = [&](double x) {
        const double v = second_derivative(shape, x);
        if (first || v < best) best = v;
        first = false;
    };
    for (double x : points) consider(x);
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Bell> || std::is_same_v<S, ScaledBell>) {
                if (s.center >= lo && s.center <= hi) consider(s.center);
            }
        },
        shape);
    return first ? 0.0 : best;
}

inline bool is_constant(const Shape& shape) { return std::holds_alternative<Constant>(shape); }

/// True for beta(x) = beta0 * x with beta0 > 0.
inline bool is_linear_through_origin(const Shape& shape) {
    const auto* a = std::get_if<Affine>(&shape);
    return a != nullptr && a->intercept == 0.0 && a->slope > 0.0;
}

inline std::string describe(const Shape& shape) {
    auto num = [](double v) {
        std::string s = std::to_string(v);
        return s;
    };
    return std::visit(
        [&](const auto& s) -> std::string {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Constant>) {
                return "constant(" + num(s.value) + ")";
            } else if constexpr (std::is_same_v<S, Affine>) {
                return "affine(" + num(s.intercept) + ", " + num(s.slope) + ")";
            } else if constexpr (std::is_same_v<S, Bell>) {
                return "bell(base=" + num(s.base) + ", amplitude=" + num(s.amplitude) +
                       ", center=" + num(s.center) + ", sigma=" + num(s.sigma) + ")";
            } else {
                return "scaled_bell(base=" + num(s.base) + ", alpha=" + num(s.alpha) +
                       ", center=" + num(s.center) + ")";
            }
        },
        shape);
}

/// The uniform fragment repartition kernel kappa(x, y) = 1/y on 0 < x < y (zero when y <= x0).
/// It is the only kernel supported.
struct UniformKernel {
    /// Zeroth and first moments of kappa(., y) restricted to the polymer range (x0, y).
    /// The remainder of the first moment, x0^2 / (2y) per fragment, returns to the monomer pool.
    static double polymer_fraction(double y, double x0) { return y > x0 ? (y - x0) / y : 0.0; }
    static double polymer_first_moment(double y, double x0) {
        return y > x0 ? (y - x0) * (y + x0) / (2.0 * y) : 0.0;
    }
};

struct CoefficientSet {
    double lambda = 0.0;  // monomer synthesis, monomers/day
    double gamma = 1.0;   // monomer degradation, 1/day
    double x0 = 0.0;      // minimal polymer size
    Shape tau = Constant{0.0};
    Shape beta = Constant{0.0};
    Shape mu = Constant{0.0};
    UniformKernel kappa{};

    double vbar() const { return lambda / gamma; }

    /// Scalar invariants; sign of the rate functions is checked when they are sampled.
    void validate() const {
        if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
        if (!(gamma > 0.0)) throw DomainError("gamma must be > 0");
        if (!(x0 >= 0.0)) throw DomainError("x0 must be >= 0");
    }
};

}  // namespace prion
