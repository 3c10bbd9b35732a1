#include <catch2/catch.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "prion/steady_state.hpp"
#include "support.hpp"

using namespace prion;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

CoefficientSet translated_bell(double center) {
    return test::bell_coefficients(0.01, center, std::sqrt(0.05));
}

}  // namespace

TEST_CASE("constant-coefficient steady state matches the closed forms", "[steady-state]") {
    const auto c = test::constant_coefficients();
    const DiscreteModel model(c, test::uniform_grid(*default_xmax(c), 800));
    const auto ss = build_steady_state(model);
    REQUIRE(ss.found);
    REQUIRE(ss.exists);
    const double v_inf = test::kMu0 * test::kMu0 / (test::kTau0 * test::kBeta0);
    const double rho_inf = (c.lambda - c.gamma * v_inf) / (v_inf * test::kTau0);
    CHECK_THAT(ss.v_inf, WithinRel(v_inf, 0.01));
    REQUIRE(ss.rho_inf.has_value());
    CHECK_THAT(*ss.rho_inf, WithinRel(rho_inf, 0.02));
    CHECK_THAT(ss.center_of_mass, WithinRel(test::kMu0 / test::kBeta0, 0.01));
    CHECK(std::abs(ss.root.lambda_at_root) <= 1e-8);
    CHECK(ss.root.bracket_lo <= ss.v_inf);
    CHECK(ss.v_inf <= ss.root.bracket_hi);

    const double len = closed_form::constant_length(test::kTau0, test::kBeta0, ss.v_inf);
    const auto exact = project(model.grid(), [len](double x) { return closed_form::constant_profile(x, len); });
    std::vector<double> diff(exact.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ss.profile[i] - exact[i];
    CHECK(detail::weighted_l1(model.grid(), diff) <= 0.02);

    const auto report = bimodality_report(model, ss.v_inf, ss.u_inf);
    CHECK(report.n_modes == 1);
    CHECK_FALSE(report.convex_critical_point);
    CHECK_FALSE(report.necessary_condition_met);
}

TEST_CASE("stationary profile satisfies the reduced equation and boundary relations", "[steady-state]") {
    const auto c = test::constant_coefficients();
    const DiscreteModel model(c, test::uniform_grid(*default_xmax(c), 800));
    const auto ss = build_steady_state(model);
    const auto check = stationary_profile_check(model, ss);
    CHECK(check.ode_residual <= 0.05);
    CHECK(check.left_value <= 0.02);
    CHECK(check.left_flux_mismatch <= 0.05);
    CHECK(check.moment_relation <= 0.01);

    auto bell = test::bell_coefficients(0.01, 2.0, std::sqrt(0.1));
    bell.mu = Affine{0.05, 0.001};
    const DiscreteModel other(bell, test::uniform_grid(16.0, 200));
    CHECK_THROWS_AS(stationary_profile_check(other, ss), UnsupportedConfiguration);
}

TEST_CASE("steady state is absent when the root exceeds the disease-free level", "[steady-state]") {
    const DiscreteModel model(test::constant_coefficients(240.0), test::uniform_grid(16.0, 400));
    const auto ss = build_steady_state(model);
    REQUIRE(ss.found);
    CHECK(ss.v_inf > ss.vbar);
    CHECK_FALSE(ss.exists);
    CHECK_FALSE(ss.rho_inf.has_value());
}

TEST_CASE("no root is reported without a sign change", "[steady-state]") {
    auto c = test::constant_coefficients();
    c.tau = Constant{1e-9};
    const DiscreteModel model(c, test::uniform_grid(16.0, 200));
    RootOptions opts;
    opts.v_max = 1000.0;
    const auto root = find_v_inf(model, opts);
    CHECK_FALSE(root.v_inf.has_value());
    CHECK(root.lambda_hi > 0.0);
    CHECK(root.iterations == 0);
}

TEST_CASE("a narrow conversion bump splits the profile into two modes", "[steady-state]") {
    const DiscreteModel model(translated_bell(5.0 / 3.0), test::uniform_grid(20.0, 400));
    const auto ss = build_steady_state(model);
    REQUIRE(ss.exists);
    const auto r = bimodality_report(model, ss.v_inf, ss.u_inf);
    CHECK(r.n_modes == 2);
    CHECK(r.convex_critical_point);
    REQUIRE(r.condition_applicable);
    CHECK(r.necessary_condition_met);
    REQUIRE(r.mode_locations.size() == 2);
    REQUIRE(r.dip_location.has_value());
    CHECK(r.mode_locations[0] < *r.dip_location);
    CHECK(*r.dip_location < r.mode_locations[1]);
    CHECK(r.split_strength > 0.1);
}

TEST_CASE("splitting is strongest when the bump sits at the center of mass", "[steady-state]") {
    auto strength = [](double center) {
        const DiscreteModel model(translated_bell(center), test::uniform_grid(20.0, 400));
        const auto ss = build_steady_state(model);
        REQUIRE(ss.exists);
        return bimodality_report(model, ss.v_inf, ss.u_inf).split_strength;
    };
    const double at_mass = strength(5.0 / 3.0);
    CHECK(at_mass > strength(5.0 / 6.0));
    CHECK(at_mass > strength(10.0 / 3.0));
    CHECK(strength(20.0 / 3.0) < 0.5 * at_mass);
}

TEST_CASE("bimodal profiles always satisfy the necessary curvature condition", "[steady-state]") {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> log_amp(-4.0, -1.0);
    std::uniform_real_distribution<double> center(0.5, 5.0);
    std::uniform_real_distribution<double> log_var(-2.0, 0.0);
    int bimodal = 0;
    for (int k = 0; k < 12; ++k) {
        const auto c = test::bell_coefficients(std::pow(10.0, log_amp(rng)), center(rng),
                                               std::sqrt(std::pow(10.0, log_var(rng))));
        const DiscreteModel model(c, test::uniform_grid(20.0, 200));
        const auto ss = build_steady_state(model);
        if (!ss.found) continue;
        const auto r = bimodality_report(model, ss.v_inf, ss.profile);
        if (r.convex_critical_point) {
            ++bimodal;
            INFO("sample " << k << ": V inf tau'' = " << r.v_inf_min_tau_second);
            CHECK(r.necessary_condition_met);
        }
    }
    INFO(bimodal << " bimodal samples");
    SUCCEED();
}

TEST_CASE("mode detection ignores noise and finds separated bumps", "[steady-state]") {
    const auto g = SizeGrid::uniform(0.0, 10.0, 500);
    const auto two = project(g, [](double x) { return std::exp(-8.0 * (x - 2.0) * (x - 2.0)) + 0.6 * std::exp(-8.0 * (x - 6.0) * (x - 6.0)); });
    const auto modes = detect_modes(g, two);
    REQUIRE(modes.size() == 2);
    CHECK_THAT(modes[0].location, WithinAbs(2.0, 0.05));
    CHECK_THAT(modes[1].location, WithinAbs(6.0, 0.05));

    auto rippled = project(g, [](double x) { return std::exp(-0.5 * (x - 4.0) * (x - 4.0)); });
    for (std::size_t i = 0; i < rippled.size(); ++i) rippled[i] *= 1.0 + 1e-4 * ((i % 2) ? 1.0 : -1.0);
    CHECK(detect_modes(g, rippled).size() == 1);

    const auto decreasing = project(g, [](double x) { return std::exp(-x); });
    const auto edge = detect_modes(g, decreasing);
    REQUIRE(edge.size() == 1);
    CHECK(edge[0].index == 0);
}
