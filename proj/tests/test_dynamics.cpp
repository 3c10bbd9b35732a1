#include <catch2/catch.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "prion/dynamics.hpp"
#include "support.hpp"

using namespace prion;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Trajectory synthetic(double amplitude, double rate, double t_end, double dt) {
    Trajectory tr;
    for (double t = 0.0; t <= t_end + 1e-12; t += dt) {
        tr.times.push_back(t);
        tr.rho_series.push_back(amplitude * std::exp(rate * t));
        tr.v_series.push_back(600.0);
    }
    return tr;
}

}  // namespace

TEST_CASE("empty polymer state relaxes V exponentially to lambda over gamma", "[dynamics]") {
    const auto c = test::constant_coefficients();
    const DiscreteModel model(c, test::uniform_grid(16.0, 100));
    const double v0 = 100.0;
    IntegratorOptions opts;
    opts.t_end = 3.0;
    opts.sample_interval = 0.25;
    const auto tr = integrate(model, PolymerState(model.grid_ptr(), v0, std::vector<double>(100, 0.0)), opts);
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        const double exact = c.vbar() + (v0 - c.vbar()) * std::exp(-c.gamma * tr.times[i]);
        worst = std::max(worst, std::abs(tr.v_series[i] - exact) / exact);
        CHECK(tr.rho_series[i] == 0.0);
    }
    CHECK(worst <= 5e-4);
    CHECK_THAT(tr.times.back(), WithinAbs(3.0, 1e-12));
}

TEST_CASE("trajectories stay nonnegative and conserve mass to rounding", "[dynamics]") {
    const auto c = test::bell_coefficients(0.01, 2.0, std::sqrt(0.1));
    const DiscreteModel model(c, test::uniform_grid(16.0, 200));
    for (auto order : {TransportOrder::First, TransportOrder::SecondLimited}) {
        IntegratorOptions opts;
        opts.t_end = 40.0;
        opts.transport = order;
        opts.snapshot_times = {0.0, 10.0, 20.0, 40.0};
        const auto tr = integrate(model, PolymerState(model.grid_ptr(), c.vbar(), rational_profile(model.grid(), 0.5)), opts);
        CHECK(tr.max_relative_residual <= 1e-8);
        REQUIRE(tr.snapshots.size() == 4);
        for (const auto& s : tr.snapshots)
            for (double x : s.u) CHECK(x >= 0.0);
        for (double v : tr.v_series) CHECK(v >= 0.0);
        CHECK(tr.truncation_flux_total >= 0.0);
        CHECK(tr.min_dt > 0.0);
        CHECK(tr.min_dt <= tr.max_dt);
    }
}

TEST_CASE("admissible random coefficient sets keep densities nonnegative", "[dynamics]") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < 6; ++k) {
        auto c = test::constant_coefficients(100.0 + 3000.0 * unit(rng), 0.5 + 5.0 * unit(rng));
        c.tau = Bell{0.0005 + 0.002 * unit(rng), 0.05 * unit(rng), 0.5 + 4.0 * unit(rng), 0.2 + unit(rng)};
        c.beta = Affine{0.01 * unit(rng), 0.01 + 0.05 * unit(rng)};
        c.mu = Constant{0.01 + 0.1 * unit(rng)};
        const DiscreteModel model(c, test::uniform_grid(12.0, 120));
        IntegratorOptions opts;
        opts.t_end = 20.0;
        opts.sample_interval = 1.0;
        opts.snapshot_times = {5.0, 20.0};
        const auto tr = integrate(model, PolymerState(model.grid_ptr(), 2.0 * c.vbar() * unit(rng), rational_profile(model.grid(), 5.0 * unit(rng))), opts);
        for (const auto& s : tr.snapshots)
            for (double x : s.u) CHECK(x >= 0.0);
        for (double v : tr.v_series) CHECK(v >= 0.0);
        CHECK(tr.max_relative_residual <= 1e-8);
    }
}

TEST_CASE("negative initial data is rejected", "[dynamics]") {
    const DiscreteModel model(test::constant_coefficients(), test::uniform_grid(16.0, 50));
    std::vector<double> u(50, 0.0);
    u[3] = -1e-9;
    IntegratorOptions opts;
    opts.t_end = 1.0;
    CHECK_THROWS_AS(integrate(model, PolymerState(model.grid_ptr(), 600.0, u), opts), PositivityError);
}

TEST_CASE("growth fit recovers a synthetic exponential rate", "[dynamics]") {
    const auto tr = synthetic(7.0, 0.1, 50.0, 0.5);
    const auto fit = growth_rate(tr, 600.0, 10.0, 40.0);
    CHECK_THAT(fit.rate, WithinAbs(0.1, 1e-10));
    CHECK_THAT(std::exp(fit.intercept), WithinRel(7.0, 1e-9));
    CHECK_THAT(fit.r_squared, WithinAbs(1.0, 1e-12));
    CHECK(fit.v_drift == 0.0);
    CHECK_THROWS_AS(growth_rate(tr, 600.0, 100.0, 200.0), DomainError);
}

TEST_CASE("halving the inoculum delays incubation by log 2 over the growth rate", "[dynamics]") {
    const double rate = 0.1;
    const double lambda = -rate;
    const auto full = synthetic(1e-3, rate, 200.0, 0.001);
    const auto half = synthetic(0.5e-3, rate, 200.0, 0.001);
    const auto a = incubation_time(full, 1.0, 1e-3, lambda);
    const auto b = incubation_time(half, 1.0, 0.5e-3, lambda);
    REQUIRE(a.reached);
    REQUIRE(b.reached);
    CHECK_THAT(b.t_incubation - a.t_incubation, WithinAbs(std::log(2.0) / rate, 1e-4));
    REQUIRE(a.predicted.has_value());
    CHECK_THAT(*b.predicted - *a.predicted, WithinRel(std::log(2.0) / rate, 1e-12));
    CHECK_THAT(a.t_incubation, WithinAbs(*a.predicted, 1e-4));

    const auto never = incubation_time(synthetic(1e-3, rate, 10.0, 0.5), 1.0, 1e-3, lambda);
    CHECK_FALSE(never.reached);
    CHECK(std::isnan(never.t_incubation));
    CHECK_THAT(never.final_rho, WithinRel(1e-3 * std::exp(1.0), 1e-12));
}

TEST_CASE("linear regime window ends when V drifts from its initial level", "[dynamics]") {
    const DiscreteModel model(test::constant_coefficients(), test::uniform_grid(16.666666666666668, 200));
    IntegratorOptions opts;
    opts.t_end = 200.0;
    const auto tr = integrate(model, PolymerState(model.grid_ptr(), 600.0, rational_profile(model.grid(), 0.5)), opts);
    const auto window = linear_regime_window(tr, 600.0);
    REQUIRE(window.has_value());
    const auto fit = growth_rate(tr, 600.0, window->first, window->second);
    CHECK(fit.v_drift <= 0.05);
    const double exact = -closed_form::constant_lambda(test::kTau0, test::kBeta0, test::kMu0, 600.0);
    CHECK_THAT(fit.rate, WithinRel(exact, 0.02));
}

TEST_CASE("unperturbed disease-free state is a fixed point", "[dynamics]") {
    const auto c = test::constant_coefficients();
    const DiscreteModel model(c, test::uniform_grid(16.0, 100));
    const auto rep = stability_experiment(model, rational_profile(model.grid(), 0.5), 0.0, 50.0);
    CHECK(rep.verdict == StabilityVerdict::Stable);
    CHECK(rep.final_v == c.vbar());
    for (double x : rep.trajectory.final_state.u) CHECK(x == 0.0);
}

TEST_CASE("stability verdict follows the sign of lambda at the disease-free level", "[dynamics]") {
    SECTION("stable below the threshold") {
        const DiscreteModel model(test::constant_coefficients(240.0), test::uniform_grid(30.0, 200));
        const auto rep = stability_experiment(model, rational_profile(model.grid(), 0.5), 1e-3, 600.0);
        CHECK(rep.lambda_vbar > 0.0);
        CHECK(rep.verdict == StabilityVerdict::Stable);
        CHECK(rep.final_norm < rep.initial_norm);
    }
    SECTION("unstable above the threshold") {
        const DiscreteModel model(test::constant_coefficients(), test::uniform_grid(16.666666666666668, 200));
        const auto rep = stability_experiment(model, rational_profile(model.grid(), 0.5), 1e-3, 600.0);
        CHECK(rep.lambda_vbar < 0.0);
        CHECK(rep.verdict == StabilityVerdict::Unstable);
        REQUIRE(rep.escape_time.has_value());
        const double v_inf = closed_form::constant_v_inf(test::kTau0, test::kBeta0, test::kMu0);
        CHECK_THAT(rep.final_v, WithinRel(v_inf, 0.02));
    }
}

TEST_CASE("to_string names every verdict", "[dynamics]") {
    CHECK(std::string(to_string(StabilityVerdict::Stable)) == "stable");
    CHECK(std::string(to_string(StabilityVerdict::Unstable)) == "unstable");
    CHECK(std::string(to_string(StabilityVerdict::Inconclusive)) == "inconclusive");
}
