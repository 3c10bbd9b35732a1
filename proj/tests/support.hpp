#pragma once

#include <memory>

#include "prion/coefficients.hpp"
#include "prion/grid.hpp"
#include "prion/model.hpp"

namespace prion::test {

inline constexpr double kTau0 = 0.001;
inline constexpr double kBeta0 = 0.03;
inline constexpr double kMu0 = 0.05;

inline CoefficientSet constant_coefficients(double lambda = 2400.0, double gamma = 4.0) {
    CoefficientSet c;
    c.lambda = lambda;
    c.gamma = gamma;
    c.x0 = 0.0;
    c.tau = Constant{kTau0};
    c.beta = Affine{0.0, kBeta0};
    c.mu = Constant{kMu0};
    return c;
}

inline CoefficientSet bell_coefficients(double amplitude, double center, double sigma) {
    CoefficientSet c = constant_coefficients();
    c.tau = Bell{kTau0, amplitude, center, sigma};
    return c;
}

inline std::shared_ptr<const SizeGrid> uniform_grid(double xmax, std::size_t n, double x0 = 0.0) {
    return std::make_shared<const SizeGrid>(SizeGrid::uniform(x0, xmax, n));
}

}  // namespace prion::test
