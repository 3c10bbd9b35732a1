#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "prion/config.hpp"
#include "prion/dynamics.hpp"
#include "prion/eigen_solver.hpp"
#include "prion/io.hpp"
#include "prion/masel.hpp"
#include "prion/operator.hpp"
#include "prion/parallel.hpp"
#include "prion/record.hpp"
#include "prion/steady_state.hpp"

// Experiment orchestration: turns a validated RunConfig into solver calls and writes
//     <dir>/<experiment>-<digest>-<part>.csv    series and profiles
//     <dir>/<experiment>-<digest>-summary.json  ExperimentRecord, always written
// Exit status: 0 success, 1 error (configuration or runtime), 2 partial (failed sweep items
// or failed validation checks).

namespace prion {

struct RunOptions {
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    bool dump_operator = false;
    bool discrete = false;
};

struct RunOutcome {
    int exit_code = 0;
    ExperimentRecord record;
    std::filesystem::path summary;
};

namespace harness_detail {

struct Context {
    const RunConfig& cfg;
    Experiment experiment;
    std::filesystem::path dir;
    std::string stem;
    unsigned threads = 1;
    std::uint64_t seed = 0;
    bool dump_operator = false;
    bool discrete = false;

    EigenOptions eigen_options() const { return {cfg.eigen.tolerance, cfg.eigen.max_iterations}; }

    /// Writes one CSV output and returns its file name, or nothing when CSV output is off.
    std::optional<std::string> csv(const std::string& part, const io::CsvTable& table) const {
        if (!cfg.output.csv) return std::nullopt;
        const std::string name = stem + "-" + part + ".csv";
        io::write_file(dir / name, table.str());
        return name;
    }
};

struct Built {
    std::shared_ptr<const SizeGrid> grid;
    std::unique_ptr<DiscreteModel> model;
};

inline Built build(const RunConfig& cfg, const CoefficientSet& c) {
    Built b;
    b.grid = std::make_shared<const SizeGrid>(cfg.make_grid_for(c));
    b.model = std::make_unique<DiscreteModel>(c, b.grid);
    return b;
}

inline Json grid_json(const SizeGrid& g, Spacing spacing) {
    return {{"n", g.size()},
            {"x0", json_number(g.x0())},
            {"xmax", json_number(g.xmax())},
            {"spacing", spacing == Spacing::Geometric ? "geometric" : "uniform"},
            {"hash", io::hex64(g.hash())}};
}

inline std::string tag(const char* prefix, double v) { return std::string(prefix) + "@" + io::format_double(v); }

inline std::vector<double> linspace(double a, double b, int count) {
    std::vector<double> out;
    for (int k = 0; k < count; ++k) out.push_back(a + (b - a) * k / (count - 1));
    return out;
}

// Closed-form references ---------------------------------------------------------------

/// mu constant, tau constant or affine, beta = beta1 + beta0 x, x0 = 0.
inline std::optional<double> reference_lambda(const CoefficientSet& c, double v) {
    const auto* mu = std::get_if<Constant>(&c.mu);
    const auto* beta = std::get_if<Affine>(&c.beta);
    if (c.x0 != 0.0 || mu == nullptr || beta == nullptr || !(beta->slope > 0.0)) return std::nullopt;
    double tau0 = 0.0, tau1 = 0.0;
    if (const auto* t = std::get_if<Constant>(&c.tau)) {
        tau0 = t->value;
    } else if (const auto* t = std::get_if<Affine>(&c.tau)) {
        tau0 = t->intercept;
        tau1 = t->slope;
    } else {
        return std::nullopt;
    }
    return closed_form::affine_lambda(beta->intercept, beta->slope, tau0, tau1, mu->value, v);
}

struct ConstantFamily {
    double tau0, beta0, mu0;
};

/// tau and mu constant, beta = beta0 x, x0 = 0.
inline std::optional<ConstantFamily> constant_family(const CoefficientSet& c) {
    if (c.x0 != 0.0 || !is_constant(c.tau) || !is_constant(c.mu) || !is_linear_through_origin(c.beta))
        return std::nullopt;
    const double beta0 = std::get<Affine>(c.beta).slope;
    if (!(beta0 > 0.0)) return std::nullopt;
    return ConstantFamily{std::get<Constant>(c.tau).value, beta0, std::get<Constant>(c.mu).value};
}

inline double relative(double a, double b) { return std::abs(a - b) / std::abs(b); }

// eigen -------------------------------------------------------------------------------

inline void run_eigen(const Context& ctx, ExperimentRecord& rec) {
    const auto& cfg = ctx.cfg;
    const Built b = build(cfg, cfg.coeffs);
    const auto& model = *b.model;
    const auto& g = *b.grid;
    const double vbar = cfg.coeffs.vbar();
    const std::vector<double> vs = cfg.eigen.v.empty() ? std::vector<double>{vbar} : cfg.eigen.v;
    const auto family = constant_family(cfg.coeffs);

    struct Item {
        std::optional<EigenSolution> sol;
        std::optional<MomentEigenvalue> moments;
        std::optional<AdjointSolution> adj;
        std::optional<HypothesisConstants> hyp;
        std::string error;
    };
    std::vector<Item> items(vs.size());
    const auto eopts = ctx.eigen_options();
    parallel_for(vs.size(), ctx.threads, [&](std::size_t i) {
        auto& it = items[i];
        try {
            it.sol = principal_eigenpair(model, vs[i], eopts);
            if (!it.sol->degenerate) it.moments = eigenvalue_from_moments(model, *it.sol);
            if (cfg.eigen.adjoint && !it.sol->degenerate) it.adj = adjoint_eigenpair(model, vs[i], eopts);
            if (cfg.eigen.hypotheses && !it.sol->degenerate)
                it.hyp = hypothesis_constants(model, vs[i], 0.8, eopts);
        } catch (const std::exception& e) {
            it.error = e.what();
        }
    });

    io::CsvTable table({"v", "lambda", "growth_rate", "residual", "iterations", "count_form",
                        "mass_form", "truncation_bound", "lambda_reference", "relative_error"});
    std::vector<std::string> profile_header{"x"};
    std::vector<std::vector<double>> profile_cols;
    Json items_json = Json::array();
    bool decreasing = true;
    std::optional<double> prev;
    double max_rel = 0.0;
    bool any_ref = false;
    int total_iterations = 0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        const auto& it = items[i];
        Json j;
        j["v"] = json_number(vs[i]);
        if (!it.sol) {
            j["error"] = it.error;
            rec.errors.push_back("V = " + io::format_double(vs[i]) + ": " + it.error);
            items_json.push_back(std::move(j));
            continue;
        }
        const auto& s = *it.sol;
        total_iterations += s.iterations;
        if (prev && !(s.lambda < *prev + 1e-10)) decreasing = false;
        prev = s.lambda;
        j["lambda"] = json_number(s.lambda);
        j["growth_rate"] = json_number(s.growth_rate());
        j["residual"] = json_number(s.residual);
        j["tolerance"] = json_number(s.tolerance);
        j["iterations"] = s.iterations;
        j["degenerate"] = s.degenerate;
        j["outflow"] = json_number(s.outflow);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        double ref = nan, rel = nan;
        if (auto r = reference_lambda(cfg.coeffs, vs[i])) {
            ref = *r;
            rel = relative(s.lambda, ref);
            max_rel = std::max(max_rel, rel);
            any_ref = true;
            j["reference"] = {{"lambda", json_number(ref)}, {"relative_error", json_number(rel)}};
        }
        if (it.moments) {
            const auto& m = *it.moments;
            j["moments"] = {{"count_form", json_number(m.count_form)},
                            {"mass_form", json_number(m.mass_form)},
                            {"count_form_closed", json_number(m.count_form_closed())},
                            {"mass_form_closed", json_number(m.mass_form_closed())},
                            {"truncation_bound", json_number(m.truncation_bound())},
                            {"mean_size", json_number(m.mean_size)}};
        }
        table.add_row({vs[i], s.lambda, s.growth_rate(), s.residual, static_cast<double>(s.iterations),
                       it.moments ? it.moments->count_form : nan, it.moments ? it.moments->mass_form : nan,
                       it.moments ? it.moments->truncation_bound() : nan, ref, rel});
        if (!s.degenerate) {
            profile_header.push_back(tag("U", vs[i]));
            profile_cols.push_back(s.u);
        }
        if (it.adj) {
            const auto& a = *it.adj;
            Json aj = {{"pairing", json_number(a.pairing)},
                       {"residual", json_number(a.residual)},
                       {"iterations", a.iterations}};
            if (family) {
                const double len = closed_form::constant_length(family->tau0, family->beta0, vs[i]);
                const double end = g.x0() + 0.8 * (g.xmax() - g.x0());
                double sup = 0.0;
                for (std::size_t k = 0; k < g.size() && g.center(k) <= end; ++k) {
                    const double exact = 1.0 + g.center(k) / len;
                    sup = std::max(sup, std::abs(a.phi[k] - exact) / exact);
                }
                aj["reference_sup_relative_error"] = json_number(sup);
                aj["reference_window_end"] = json_number(end);
            }
            j["adjoint"] = std::move(aj);
            profile_header.push_back(tag("phi", vs[i]));
            profile_cols.push_back(a.phi);
        }
        if (it.hyp) {
            const auto& h = *it.hyp;
            j["hypotheses"] = {{"k1", json_number(h.k1)},
                               {"k2", json_number(h.k2)},
                               {"k", json_number(h.k)},
                               {"window_end", json_number(h.window_end)},
                               {"k_domain_dependent", h.k_domain_dependent}};
        }
        items_json.push_back(std::move(j));
    }

    if (auto f = ctx.csv("lambda", table)) rec.files.push_back(*f);
    if (!profile_cols.empty()) {
        io::CsvTable prof(profile_header);
        std::vector<double> row(profile_header.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            row[0] = g.center(k);
            for (std::size_t c = 0; c < profile_cols.size(); ++c) row[c + 1] = profile_cols[c][k];
            prof.add_row(row);
        }
        if (auto f = ctx.csv("profiles", prof)) rec.files.push_back(*f);
    }
    rec.results["vbar"] = json_number(vbar);
    rec.results["items"] = std::move(items_json);
    rec.results["lambda_decreasing"] = decreasing;
    if (any_ref) rec.results["max_reference_relative_error"] = json_number(max_rel);
    if (is_constant(cfg.coeffs.mu) && !vs.empty() && vs.front() == 0.0 && items.front().sol)
        rec.results["lambda0_minus_mu0"] =
            json_number(items.front().sol->lambda - std::get<Constant>(cfg.coeffs.mu).value);
    rec.diagnostics["grid"] = grid_json(g, cfg.grid.spacing);
    rec.diagnostics["total_iterations"] = total_iterations;
    rec.provenance.grid_hash = io::hex64(g.hash());
    if (!rec.errors.empty()) rec.status = "partial";
}

// steady -------------------------------------------------------------------------------

inline Json bimodality_json(const BimodalityReport& r) {
    Json j;
    j["n_modes"] = r.n_modes;
    j["mode_locations"] = json_array(r.mode_locations);
    j["convex_critical_point"] = r.convex_critical_point;
    j["dip_location"] = r.dip_location ? json_number(*r.dip_location) : Json(nullptr);
    j["condition_applicable"] = r.condition_applicable;
    j["necessary_condition_met"] = r.necessary_condition_met;
    j["v_inf_min_tau_second"] = json_number(r.v_inf_min_tau_second);
    j["minus_three_beta0"] = json_number(r.minus_three_beta0);
    j["split_strength"] = json_number(r.split_strength);
    return j;
}

struct SteadyOutput {
    Json results;
    std::vector<std::string> files;
    std::string grid_hash;
};

inline SteadyOutput steady_for(const Context& ctx, const CoefficientSet& c, const std::string& part) {
    const auto& cfg = ctx.cfg;
    const Built b = build(cfg, c);
    const auto& model = *b.model;
    const auto& g = *b.grid;
    RootOptions ro;
    ro.tolerance = cfg.steady.tolerance;
    ro.v_max = cfg.steady.v_max;
    ro.eigen = ctx.eigen_options();
    const SteadyState ss = build_steady_state(model, ro);

    SteadyOutput out;
    out.grid_hash = io::hex64(g.hash());
    Json& r = out.results;
    r["vbar"] = json_number(ss.vbar);
    r["found"] = ss.found;
    r["exists"] = ss.exists;
    r["existence_criterion"] = "v_inf < vbar";
    r["v_inf"] = ss.found ? json_number(ss.v_inf) : Json(nullptr);
    r["rho_inf"] = ss.rho_inf ? json_number(*ss.rho_inf) : Json(nullptr);
    r["lambda_at_root"] = json_number(ss.root.lambda_at_root);
    r["bracket"] = {json_number(ss.root.bracket_lo), json_number(ss.root.bracket_hi)};
    r["root_iterations"] = ss.root.iterations;
    r["warnings"] = ss.root.warnings;
    if (!ss.found) {
        r["center_of_mass"] = nullptr;
        r["n_modes"] = 0;
        r["mode_locations"] = Json::array();
        return out;
    }
    r["center_of_mass"] = json_number(ss.center_of_mass);
    r["tau_u"] = json_number(ss.tau_u);
    r["outflow"] = json_number(ss.outflow);
    const auto bim = bimodality_report(model, ss.v_inf, ss.profile);
    r["n_modes"] = bim.n_modes;
    r["mode_locations"] = json_array(bim.mode_locations);
    r["bimodality"] = bimodality_json(bim);

    if (const auto f = constant_family(c)) {
        const double v_ref = closed_form::constant_v_inf(f->tau0, f->beta0, f->mu0);
        const double rho_ref = (c.lambda - c.gamma * v_ref) / (v_ref * f->tau0);
        const double com_ref = f->mu0 / f->beta0;
        const double len = closed_form::constant_length(f->tau0, f->beta0, v_ref);
        double diff = 0.0, norm = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double exact = closed_form::constant_profile(g.center(k), len);
            diff += std::abs(ss.profile[k] - exact) * g.width(k);
            norm += exact * g.width(k);
        }
        Json ref = {{"v_inf", json_number(v_ref)},
                    {"v_inf_relative_error", json_number(relative(ss.v_inf, v_ref))},
                    {"center_of_mass", json_number(com_ref)},
                    {"center_of_mass_relative_error", json_number(relative(ss.center_of_mass, com_ref))},
                    {"profile_length", json_number(len)},
                    {"profile_l1_relative_error", json_number(diff / norm)}};
        if (rho_ref > 0.0) {
            ref["rho_inf"] = json_number(rho_ref);
            ref["rho_inf_relative_error"] =
                ss.rho_inf ? json_number(relative(*ss.rho_inf, rho_ref)) : Json(nullptr);
        }
        r["reference"] = std::move(ref);
    }
    try {
        const auto pc = stationary_profile_check(model, ss);
        r["profile_check"] = {{"ode_residual", json_number(pc.ode_residual)},
                              {"left_value", json_number(pc.left_value)},
                              {"left_flux_mismatch", json_number(pc.left_flux_mismatch)},
                              {"moment_relation", json_number(pc.moment_relation)}};
    } catch (const UnsupportedConfiguration&) {
        r["profile_check"] = nullptr;
    }

    std::vector<std::string> header{"x", "U", "u_inf", "tau"};
    if (!bim.potential.empty()) header.push_back("potential");
    io::CsvTable prof(header);
    std::vector<double> row(header.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        row[0] = g.center(k);
        row[1] = ss.profile[k];
        row[2] = ss.u_inf.empty() ? 0.0 : ss.u_inf[k];
        row[3] = model.samples().tau[k];
        if (!bim.potential.empty()) row[4] = bim.potential[k];
        prof.add_row(row);
    }
    if (auto name = ctx.csv(part, prof)) out.files.push_back(*name);
    return out;
}

inline void run_steady(const Context& ctx, ExperimentRecord& rec) {
    auto out = steady_for(ctx, ctx.cfg.coeffs, "profile");
    rec.results = std::move(out.results);
    rec.files = std::move(out.files);
    rec.provenance.grid_hash = out.grid_hash;
    const auto g = ctx.cfg.make_grid();
    rec.diagnostics["grid"] = grid_json(g, ctx.cfg.grid.spacing);
}

// simulate -----------------------------------------------------------------------------

inline std::vector<double> initial_profile(const RunConfig& cfg, const DiscreteModel& model, double v0,
                                           double dose) {
    const auto& sim = cfg.simulate;
    const auto& g = model.grid();
    std::vector<double> u(g.size(), 0.0);
    if (sim.initial == InitialProfile::Rational) {
        u = rational_profile(g, sim.initial_scale);
    } else if (sim.initial == InitialProfile::Eigen) {
        const auto e = principal_eigenpair(model, v0);
        if (e.degenerate) throw DomainError("eigen initial profile needs v0 > 0");
        u = e.u;
        for (double& x : u) x *= sim.initial_scale;
    }
    for (double& x : u) x *= dose;
    return u;
}

inline IntegratorOptions integrator_options(const RunConfig& cfg) {
    IntegratorOptions o;
    o.t_end = cfg.simulate.t_end;
    o.sample_interval = cfg.simulate.sample_interval;
    o.snapshot_times = cfg.simulate.snapshots;
    o.cfl = cfg.simulate.cfl;
    o.transport = cfg.simulate.transport;
    return o;
}

inline Json trajectory_diagnostics(const Trajectory& tr) {
    return {{"max_relative_residual", json_number(tr.max_relative_residual)},
            {"truncation_flux_total", json_number(tr.truncation_flux_total)},
            {"steps", tr.steps},
            {"rejected_steps", tr.rejected_steps},
            {"min_dt", json_number(tr.min_dt)},
            {"max_dt", json_number(tr.max_dt)},
            {"stopped_early", tr.stopped_early}};
}

inline io::CsvTable trajectory_table(const Trajectory& tr) {
    io::CsvTable t({"t", "V", "U", "P", "conservation_residual"});
    for (std::size_t i = 0; i < tr.times.size(); ++i)
        t.add_row({tr.times[i], tr.v_series[i], tr.rho_series[i], tr.p_series[i], tr.conservation_residuals[i]});
    return t;
}

inline io::CsvTable snapshot_table(const SizeGrid& g, const std::vector<Snapshot>& snaps) {
    std::vector<std::string> header{"x"};
    std::vector<double> mass;
    for (const auto& s : snaps) {
        header.push_back(tag("u", s.t));
        header.push_back(tag("U", s.t));
        mass.push_back(integrate(g, s.u));
    }
    io::CsvTable t(header);
    std::vector<double> row(header.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        row[0] = g.center(k);
        for (std::size_t s = 0; s < snaps.size(); ++s) {
            row[1 + 2 * s] = snaps[s].u[k];
            row[2 + 2 * s] = mass[s] > 0.0 ? snaps[s].u[k] / mass[s] : 0.0;
        }
        t.add_row(row);
    }
    return t;
}

struct DynamicsOutput {
    Json results;
    Json diagnostics;
    std::vector<std::string> files;
    std::string grid_hash;
};

/// One trajectory run from (v0, dose * initial profile). `threshold` fixes the incubation
/// threshold; otherwise it is threshold_ratio times the initial polymer count.
inline DynamicsOutput trajectory_for(const Context& ctx, const CoefficientSet& c, double dose,
                                     std::optional<double> threshold, const std::string& prefix) {
    const auto& cfg = ctx.cfg;
    const Built b = build(cfg, c);
    const auto& model = *b.model;
    const auto& g = *b.grid;
    const double vbar = c.vbar();
    const double v0 = cfg.simulate.v0.value_or(vbar);
    const auto u0 = initial_profile(cfg, model, v0, dose);
    const Trajectory tr = integrate(model, PolymerState(b.grid, v0, u0), integrator_options(cfg));

    DynamicsOutput out;
    out.grid_hash = io::hex64(g.hash());
    out.diagnostics = trajectory_diagnostics(tr);
    Json& r = out.results;
    const double rho0 = integrate(g, u0);
    r["vbar"] = json_number(vbar);
    r["v0"] = json_number(v0);
    r["dose"] = json_number(dose);
    r["rho_initial"] = json_number(rho0);
    const auto eig = principal_eigenpair(model, vbar, ctx.eigen_options());
    r["lambda_vbar"] = json_number(eig.lambda);
    r["predicted_growth_rate"] = json_number(-eig.lambda);
    r["growth"] = nullptr;
    if (rho0 > 0.0) {
        if (auto w = linear_regime_window(tr, vbar)) {
            try {
                const auto fit = growth_rate(tr, vbar, w->first, w->second);
                r["growth"] = {{"rate", json_number(fit.rate)},
                               {"r_squared", json_number(fit.r_squared)},
                               {"v_drift", json_number(fit.v_drift)},
                               {"t_start", json_number(fit.t_start)},
                               {"t_end", json_number(fit.t_end)},
                               {"points", fit.points},
                               {"relative_error", json_number(relative(fit.rate, -eig.lambda))}};
            } catch (const DomainError&) {
            }
        }
    }
    r["incubation"] = nullptr;
    if (rho0 > 0.0) {
        const double thr = threshold.value_or(cfg.simulate.threshold.value_or(cfg.simulate.threshold_ratio * rho0));
        if (thr > rho0) {
            const auto inc = incubation_time(tr, thr, rho0, eig.lambda);
            Json ij = {{"reached", inc.reached},
                       {"t_incubation", json_number(inc.t_incubation)},
                       {"threshold", json_number(inc.threshold)},
                       {"inoculation", json_number(inc.inoculation)},
                       {"predicted", inc.predicted ? json_number(*inc.predicted) : Json(nullptr)},
                       {"final_rho", json_number(inc.final_rho)}};
            ij["relative_error"] = inc.reached && inc.predicted
                                       ? json_number(relative(inc.t_incubation, *inc.predicted))
                                       : Json(nullptr);
            r["incubation"] = std::move(ij);
        }
    }
    const auto& fs = tr.final_state;
    const double fm = integrate(g, fs.u);
    r["final"] = {{"t", json_number(fs.t)},
                  {"v", json_number(fs.v)},
                  {"rho", json_number(fm)},
                  {"p", json_number(integrate_first_moment(g, fs.u))},
                  {"center_of_mass", fm > 0.0 ? json_number(integrate_first_moment(g, fs.u) / fm) : Json(nullptr)}};
    Json snaps = Json::array();
    for (const auto& s : tr.snapshots) {
        const double m = integrate(g, s.u);
        snaps.push_back({{"t", json_number(s.t)},
                         {"rho", json_number(m)},
                         {"center_of_mass", m > 0.0 ? json_number(integrate_first_moment(g, s.u) / m) : Json(nullptr)}});
    }
    r["snapshots"] = std::move(snaps);

    if (auto f = ctx.csv(prefix + "trajectory", trajectory_table(tr))) out.files.push_back(*f);
    if (!tr.snapshots.empty())
        if (auto f = ctx.csv(prefix + "snapshots", snapshot_table(g, tr.snapshots))) out.files.push_back(*f);
    return out;
}

inline void run_stability(const Context& ctx, ExperimentRecord& rec) {
    const auto& cfg = ctx.cfg;
    const auto& c = cfg.coeffs;
    const Built b = build(cfg, c);
    const auto& model = *b.model;
    const auto& g = *b.grid;
    const double vbar = c.vbar();
    const auto u0 = initial_profile(cfg, model, vbar, 1.0);
    auto opts = integrator_options(cfg);
    const auto rep = stability_experiment(model, u0, cfg.simulate.epsilon, cfg.simulate.t_end, opts);

    RootOptions ro;
    ro.tolerance = cfg.steady.tolerance;
    ro.v_max = cfg.steady.v_max;
    ro.eigen = ctx.eigen_options();
    const auto root = find_v_inf(model, ro);
    const double vscan = std::max(vbar, root.v_inf.value_or(vbar));
    const auto scan = scan_lambda(model, linspace(0.0, vscan, 21), ctx.threads, ctx.eigen_options());

    Json& r = rec.results;
    r["verdict"] = to_string(rep.verdict);
    r["regime"] = rep.lambda_vbar > 0.0 ? "stable" : "unstable";
    r["verdict_matches_regime"] = std::string(to_string(rep.verdict)) == (rep.lambda_vbar > 0.0 ? "stable" : "unstable");
    r["epsilon"] = json_number(cfg.simulate.epsilon);
    r["vbar"] = json_number(vbar);
    r["lambda_vbar"] = json_number(rep.lambda_vbar);
    r["alpha"] = json_number(rep.alpha);
    r["fitted_rate"] = json_number(rep.fitted_rate);
    r["gamma"] = json_number(rep.gamma);
    r["initial_norm"] = json_number(rep.initial_norm);
    r["final_norm"] = json_number(rep.final_norm);
    r["escape_time"] = rep.escape_time ? json_number(*rep.escape_time) : Json(nullptr);
    r["final_v"] = json_number(rep.final_v);
    r["final_center_of_mass"] = json_number(rep.final_center_of_mass);
    r["v_inf"] = root.v_inf ? json_number(*root.v_inf) : Json(nullptr);
    if (root.v_inf && rep.lambda_vbar < 0.0)
        r["final_v_relative_error"] = json_number(relative(rep.final_v, *root.v_inf));
    if (const auto f = constant_family(c)) {
        r["center_of_mass_reference"] = json_number(f->mu0 / f->beta0);
        if (rep.lambda_vbar < 0.0)
            r["center_of_mass_relative_error"] = json_number(relative(rep.final_center_of_mass, f->mu0 / f->beta0));
    }
    const auto& h = rep.hypotheses;
    r["hypotheses"] = {{"k1", json_number(h.k1)},
                       {"k2", json_number(h.k2)},
                       {"k", json_number(h.k)},
                       {"k_domain_dependent", h.k_domain_dependent},
                       {"vbar_over_lambda", json_number(rep.vbar_over_lambda)},
                       {"k_over_k1k2", json_number(rep.k_over_k1k2)}};
    r["lambda_scan"] = {{"v", json_array(scan.v)},
                        {"lambda", json_array(scan.lambda)},
                        {"decreasing", scan.decreasing}};
    rec.diagnostics = trajectory_diagnostics(rep.trajectory);
    rec.diagnostics["grid"] = grid_json(g, cfg.grid.spacing);
    rec.provenance.grid_hash = io::hex64(g.hash());

    io::CsvTable norms({"t", "norm"});
    for (std::size_t i = 0; i < rep.times.size(); ++i) norms.add_row({rep.times[i], rep.norms[i]});
    if (auto f = ctx.csv("norm", norms)) rec.files.push_back(*f);
    if (auto f = ctx.csv("trajectory", trajectory_table(rep.trajectory))) rec.files.push_back(*f);
}

inline void run_simulate(const Context& ctx, ExperimentRecord& rec) {
    if (ctx.cfg.simulate.mode == SimulateMode::Stability) {
        run_stability(ctx, rec);
        return;
    }
    auto out = trajectory_for(ctx, ctx.cfg.coeffs, ctx.cfg.simulate.dose, std::nullopt, "");
    rec.results = std::move(out.results);
    rec.diagnostics = std::move(out.diagnostics);
    rec.diagnostics["grid"] = grid_json(ctx.cfg.make_grid(), ctx.cfg.grid.spacing);
    rec.files = std::move(out.files);
    rec.provenance.grid_hash = out.grid_hash;
}

// sweep --------------------------------------------------------------------------------

inline CoefficientSet apply_axis(CoefficientSet c, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::Amplitude: std::get<Bell>(c.tau).amplitude = value; break;
        case SweepAxis::Beta0: std::get<Affine>(c.beta).slope = value; break;
        case SweepAxis::Alpha: std::get<ScaledBell>(c.tau).alpha = value; break;
        case SweepAxis::Center:
            if (auto* bell = std::get_if<Bell>(&c.tau)) bell->center = value;
            else std::get<ScaledBell>(c.tau).center = value;
            break;
        case SweepAxis::Dose: break;
    }
    return c;
}

inline SweepMode default_mode(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Alpha: return SweepMode::Eigen;
        case SweepAxis::Center: return SweepMode::Steady;
        default: return SweepMode::Dynamics;
    }
}

struct SweepItem {
    double value = 0.0;
    Json results = Json::object();
    Json diagnostics = Json::object();
    std::vector<std::string> files;
    std::string grid_hash;
    std::string error;
};

inline void eigen_item(const Context& ctx, const CoefficientSet& c, SweepItem& item, const std::string& prefix) {
    const Built b = build(ctx.cfg, c);
    const auto& model = *b.model;
    const auto& g = *b.grid;
    const double vbar = c.vbar();
    const auto e = principal_eigenpair(model, vbar, ctx.eigen_options());
    if (e.degenerate) throw DomainError("eigen sweep needs vbar > 0");
    const auto modes = detect_modes(g, e.u);
    std::vector<double> loc;
    for (const auto& m : modes) loc.push_back(m.location);
    item.grid_hash = io::hex64(g.hash());
    item.results = {{"vbar", json_number(vbar)},
                    {"lambda_vbar", json_number(e.lambda)},
                    {"growth_rate", json_number(e.growth_rate())},
                    {"tau_eff", json_number(model.consumption(e.u))},
                    {"n_modes", modes.size()},
                    {"mode_locations", json_array(loc)},
                    {"center_of_mass", json_number(integrate_first_moment(g, e.u) / integrate(g, e.u))}};
    item.diagnostics = {{"residual", json_number(e.residual)}, {"iterations", e.iterations}};
    io::CsvTable prof({"x", "U", "tau"});
    for (std::size_t k = 0; k < g.size(); ++k) prof.add_row({g.center(k), e.u[k], model.samples().tau[k]});
    if (auto f = ctx.csv(prefix + "profile", prof)) item.files.push_back(*f);
}

/// Ordering verdicts across sweep items (items in sweep order, failed ones skipped).
inline Json sweep_summary(SweepAxis axis, SweepMode mode, const std::vector<SweepItem>& items) {
    Json s = Json::object();
    std::vector<const SweepItem*> ok;
    for (const auto& it : items)
        if (it.error.empty()) ok.push_back(&it);
    std::sort(ok.begin(), ok.end(), [](const SweepItem* a, const SweepItem* b) { return a->value < b->value; });
    if (ok.size() < 2) return s;
    auto num = [](const Json& j) -> std::optional<double> {
        if (j.is_number()) return j.get<double>();
        return std::nullopt;
    };

    if (mode == SweepMode::Dynamics && axis != SweepAxis::Dose) {
        bool times_ordered = true, growth_ordered = true, all_reached = true;
        std::optional<double> prev_t, prev_g;
        for (const auto* it : ok) {
            const auto& inc = it->results["incubation"];
            const auto t = inc.is_object() && inc["reached"].get<bool>() ? num(inc["t_incubation"]) : std::nullopt;
            if (!t) all_reached = false;
            if (t && prev_t && !(*t < *prev_t)) times_ordered = false;
            if (t) prev_t = t;
            const auto gr = num(it->results["predicted_growth_rate"]);
            if (gr && prev_g && !(*gr > *prev_g)) growth_ordered = false;
            if (gr) prev_g = gr;
        }
        s["all_reached_threshold"] = all_reached;
        s["incubation_decreasing"] = all_reached && times_ordered;
        s["growth_rate_increasing"] = growth_ordered;
    }

    if (mode == SweepMode::Dynamics && axis == SweepAxis::Dose) {
        std::vector<double> xs, ts;
        for (const auto* it : ok) {
            const auto& inc = it->results["incubation"];
            if (!inc.is_object() || !inc["reached"].get<bool>()) continue;
            xs.push_back(std::log(inc["inoculation"].get<double>()));
            ts.push_back(inc["t_incubation"].get<double>());
        }
        s["points"] = xs.size();
        if (xs.size() >= 2) {
            double mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ts[i];
            mx /= static_cast<double>(xs.size());
            my /= static_cast<double>(xs.size());
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sxy += (xs[i] - mx) * (ts[i] - my);
                sxx += (xs[i] - mx) * (xs[i] - mx);
            }
            const double slope = sxy / sxx;
            const double lambda = ok.front()->results["lambda_vbar"].get<double>();
            s["log_law_slope"] = json_number(slope);
            s["intercept"] = json_number(my - slope * mx);
            if (lambda < 0.0) {
                const double expected = -1.0 / std::abs(lambda);
                s["expected_slope"] = json_number(expected);
                s["slope_relative_error"] = json_number(relative(slope, expected));
            }
        }
        s["decades"] = json_number(std::log10(ok.back()->value / ok.front()->value));
    }

    if (mode == SweepMode::Eigen) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < ok.size(); ++i)
            if (ok[i]->results["growth_rate"].get<double>() > ok[best]->results["growth_rate"].get<double>()) best = i;
        std::optional<std::size_t> onset;
        for (std::size_t i = 0; i < ok.size(); ++i)
            if (ok[i]->results["n_modes"].get<std::size_t>() >= 2) {
                onset = i;
                break;
            }
        s["argmax_growth"] = json_number(ok[best]->value);
        s["max_growth_rate"] = ok[best]->results["growth_rate"];
        s["interior_maximizer"] = best > 0 && best + 1 < ok.size();
        s["bimodality_onset"] = onset ? json_number(ok[*onset]->value) : Json(nullptr);
        s["onset_after_maximizer"] = onset.has_value() && *onset > best;
    }

    if (mode == SweepMode::Steady) {
        std::size_t best = 0, nearest = 0;
        auto split = [&](std::size_t i) {
            const auto& b = ok[i]->results["bimodality"];
            return b.is_object() ? b["split_strength"].get<double>() : 0.0;
        };
        auto dist = [&](std::size_t i) {
            const auto com = num(ok[i]->results["center_of_mass"]);
            return com ? std::abs(ok[i]->value - *com) : std::numeric_limits<double>::infinity();
        };
        for (std::size_t i = 1; i < ok.size(); ++i) {
            if (split(i) > split(best)) best = i;
            if (dist(i) < dist(nearest)) nearest = i;
        }
        s["argmax_split"] = json_number(ok[best]->value);
        s["max_split_strength"] = json_number(split(best));
        s["nearest_to_center_of_mass"] = json_number(ok[nearest]->value);
        s["split_maximal_nearest_center_of_mass"] = best == nearest;
    }
    return s;
}

inline void run_sweep(const Context& ctx, ExperimentRecord& rec) {
    const auto& cfg = ctx.cfg;
    std::vector<ConfigIssue> issues;
    if (!cfg.sweep.axis) issues.push_back({0, "sweep.axis", "required for sweeps"});
    if (cfg.sweep.values.empty()) issues.push_back({0, "sweep.values", "required for sweeps"});
    if (!issues.empty()) throw ConfigError(std::move(issues));
    const SweepAxis axis = *cfg.sweep.axis;
    const SweepMode mode = cfg.sweep.mode.value_or(default_mode(axis));
    if (axis == SweepAxis::Dose && mode != SweepMode::Dynamics)
        throw ConfigError({{0, "sweep.mode", "dose sweeps need mode = dynamics"}});

    const auto& values = cfg.sweep.values;
    std::optional<double> threshold = cfg.simulate.threshold;
    if (axis == SweepAxis::Dose && !threshold) {
        // one threshold for every dose: ratio times the count of the largest inoculum
        const Built b = build(cfg, cfg.coeffs);
        const double vbar = cfg.coeffs.vbar();
        const auto u = initial_profile(cfg, *b.model, cfg.simulate.v0.value_or(vbar), 1.0);
        threshold = cfg.simulate.threshold_ratio * integrate(*b.grid, u) *
                    *std::max_element(values.begin(), values.end());
    }

    std::vector<SweepItem> items(values.size());
    parallel_for(values.size(), ctx.threads, [&](std::size_t i) {
        auto& item = items[i];
        item.value = values[i];
        const std::string prefix = "item" + std::to_string(i) + "-";
        try {
            const CoefficientSet c = apply_axis(cfg.coeffs, axis, values[i]);
            c.validate();
            if (mode == SweepMode::Dynamics) {
                const double dose = axis == SweepAxis::Dose ? values[i] : cfg.simulate.dose;
                auto out = trajectory_for(ctx, c, dose, threshold, prefix);
                item.results = std::move(out.results);
                item.diagnostics = std::move(out.diagnostics);
                item.files = std::move(out.files);
                item.grid_hash = out.grid_hash;
            } else if (mode == SweepMode::Eigen) {
                eigen_item(ctx, c, item, prefix);
            } else {
                auto out = steady_for(ctx, c, prefix + "profile");
                item.results = std::move(out.results);
                item.files = std::move(out.files);
                item.grid_hash = out.grid_hash;
            }
        } catch (const std::exception& e) {
            item.error = e.what();
        }
    });

    Json arr = Json::array();
    io::CsvTable table({"value", "growth_rate", "t_incubation", "n_modes", "split_strength", "v_inf"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& it : items) {
        Json j = {{"value", json_number(it.value)}};
        if (!it.error.empty()) {
            j["error"] = it.error;
            rec.errors.push_back(std::string(to_string(axis)) + " = " + io::format_double(it.value) + ": " + it.error);
            arr.push_back(std::move(j));
            table.add_row({it.value, nan, nan, nan, nan, nan});
            continue;
        }
        j["grid_hash"] = it.grid_hash;
        j["results"] = it.results;
        j["diagnostics"] = it.diagnostics;
        j["files"] = it.files;
        for (const auto& f : it.files) rec.files.push_back(f);
        arr.push_back(std::move(j));
        auto get = [&](std::initializer_list<const char*> path) {
            const Json* p = &it.results;
            for (const char* k : path) {
                if (!p->is_object() || !p->contains(k)) return nan;
                p = &(*p)[k];
            }
            return p->is_number() ? p->get<double>() : nan;
        };
        double growth = get({"growth_rate"});
        if (std::isnan(growth)) growth = get({"predicted_growth_rate"});
        table.add_row({it.value, growth, get({"incubation", "t_incubation"}), get({"n_modes"}),
                       get({"bimodality", "split_strength"}), get({"v_inf"})});
    }
    if (auto f = ctx.csv("sweep", table)) rec.files.push_back(*f);
    rec.results["axis"] = to_string(axis);
    rec.results["mode"] = to_string(mode);
    if (threshold) rec.results["threshold"] = json_number(*threshold);
    rec.results["items"] = std::move(arr);
    rec.results["summary"] = sweep_summary(axis, mode, items);
    try {
        const auto g = cfg.make_grid();
        rec.provenance.grid_hash = io::hex64(g.hash());
        rec.diagnostics["grid"] = grid_json(g, cfg.grid.spacing);
    } catch (const ConfigError&) {
        rec.diagnostics["grid"] = nullptr;
    }
    if (!rec.errors.empty()) rec.status = "partial";
}

// validate -----------------------------------------------------------------------------

struct Check {
    std::string name;
    std::optional<bool> passed;  // empty when the check does not apply
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

inline Json check_json(const Check& c) {
    return {{"name", c.name},
            {"status", !c.passed ? "skipped" : (*c.passed ? "pass" : "fail")},
            {"value", json_number(c.value)},
            {"tolerance", json_number(c.tolerance)},
            {"detail", c.detail}};
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

inline Json discrete_comparison(const Context& ctx, ExperimentRecord& rec, std::vector<Check>& checks) {
    const auto& cfg = ctx.cfg;
    const auto& c = cfg.coeffs;
    Calibration cal;
    cal.scale = cfg.validate.scale;
    cal.n0 = cfg.validate.n0;
    const MaselParams p = calibrate(c, cal);
    const Built b = build(cfg, c);
    const double vbar = c.vbar();
    const double t_end = cfg.validate.t_end;
    const double dt = cfg.simulate.sample_interval;
    IntegratorOptions o;
    o.t_end = t_end;
    o.sample_interval = dt;
    Json out;
    out["calibration"] = {{"scale", json_number(cal.scale)},
                          {"n0", cal.n0},
                          {"n_max", p.n_max},
                          {"lambda", json_number(p.lambda)},
                          {"beta", json_number(p.beta)},
                          {"tau", json_number(p.tau)},
                          {"mu", json_number(p.mu)},
                          {"convention", "x = i / scale, V_d = scale V, u_i = u(i / scale) / scale"}};
    auto report_json = [](const DiscrepancyReport& r) {
        return Json{{"sup_v", json_number(r.sup_v)},
                    {"sup_count", json_number(r.sup_count)},
                    {"sup_mass", json_number(r.sup_mass)},
                    {"growth_discrete", r.growth_discrete ? json_number(*r.growth_discrete) : Json(nullptr)},
                    {"growth_continuum", r.growth_continuum ? json_number(*r.growth_continuum) : Json(nullptr)},
                    {"growth_discrepancy", r.growth_discrepancy ? json_number(*r.growth_discrepancy) : Json(nullptr)},
                    {"fit_start", json_number(r.fit_start)},
                    {"fit_end", json_number(r.fit_end)},
                    {"max_tail_ratio", json_number(r.max_tail_ratio)},
                    {"within_gate", r.within_gate}};
    };
    auto table = [](const DiscreteTrajectory& d, const Trajectory& tr, double scale) {
        io::CsvTable t({"t", "V_discrete", "V_continuum", "U_discrete", "U_continuum", "P_discrete", "P_continuum"});
        for (std::size_t i = 0; i < tr.times.size() && i < d.times.size(); ++i)
            t.add_row({tr.times[i], d.v_series[i] / scale, tr.v_series[i], d.count_series[i], tr.rho_series[i],
                       d.mass_series[i] / scale, tr.p_series[i]});
        return t;
    };

    // uninfected: V relaxes from v0 with no polymers
    const double v0 = cfg.simulate.v0.value_or(0.5 * vbar);
    {
        const auto ds = discretize(p, cal.scale, v0, [](double) { return 0.0; });
        const auto dtr = run_discrete(p, ds, t_end, dt, o);
        const auto tr = integrate(*b.model, PolymerState(b.grid, v0, std::vector<double>(b.grid->size(), 0.0)), o);
        const auto rep = compare_continuum(p, dtr, c, tr, cal);
        out["uninfected"] = report_json(rep);
        out["uninfected"]["v0"] = json_number(v0);
        checks.push_back({"discrete_uninfected_v", rep.sup_v <= 1e-12, rep.sup_v, 1e-12,
                          "sup relative difference of V(t), discrete vs continuum"});
        if (auto f = ctx.csv("discrete-uninfected", table(dtr, tr, cal.scale))) rec.files.push_back(*f);
    }
    // infected: exponential phase from the disease-free level
    {
        const double scale0 = cfg.simulate.initial_scale * cfg.validate.dose;
        auto f = [scale0](double x) { return scale0 * x * x / (1.0 + x * x * x * x); };
        const auto ds = discretize(p, cal.scale, vbar, f);
        const auto dtr = run_discrete(p, ds, t_end, dt, o);
        const auto tr = integrate(*b.model, PolymerState(b.grid, vbar, project(*b.grid, f)), o);
        const auto rep = compare_continuum(p, dtr, c, tr, cal);
        out["infected"] = report_json(rep);
        out["infected"]["discrete_max_relative_residual"] = json_number(dtr.max_relative_residual);
        if (rep.growth_discrepancy)
            checks.push_back({"discrete_growth_rate", *rep.growth_discrepancy <= 0.05, *rep.growth_discrepancy, 0.05,
                              "relative difference of fitted exponential growth rates"});
        else
            checks.push_back({"discrete_growth_rate", std::nullopt, 0.0, 0.05, "no linear-regime window"});
        checks.push_back({"discrete_mass_balance", dtr.max_relative_residual <= 1e-8, dtr.max_relative_residual,
                          1e-8, "discrete first-moment balance residual"});
        if (auto name = ctx.csv("discrete-infected", table(dtr, tr, cal.scale))) rec.files.push_back(*name);
    }
    return out;
}

inline void run_validate(const Context& ctx, ExperimentRecord& rec) {
    const auto& cfg = ctx.cfg;
    const auto& c = cfg.coeffs;
    const Built b = build(cfg, c);
    const auto& model = *b.model;
    const auto& g = *b.grid;
    const double v = cfg.validate.v.value_or(c.vbar());
    const FragOperator op(model, v);
    const AdjointOperator adj(model, v);
    std::mt19937_64 rng(ctx.seed);
    std::vector<Check> checks;
    const std::size_t n = g.size();

    {
        const auto& k = model.kernel();
        double worst = 0.0;
        std::size_t active = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!k.active(j)) continue;
            ++active;
            double count = 0.0, mass = 0.0;
            for (std::size_t i = 0; i < j; ++i) {
                count += k.weight(i, j);
                mass += g.center(i) * k.weight(i, j);
            }
            worst = std::max(worst, std::abs(count - k.target_count(j)) / k.target_count(j));
            worst = std::max(worst, std::abs(mass - k.target_mass(j)) / k.target_mass(j));
        }
        checks.push_back({"kernel_moments", worst <= 1e-12, worst, 1e-12,
                          std::to_string(active) + " active columns of " + std::to_string(n)});
    }
    {
        double worst = 0.0;
        for (int p = 0; p < cfg.validate.pairs; ++p) {
            const auto u = random_vector(rng, n);
            const auto phi = random_vector(rng, n);
            const auto lu = op.apply(u);
            const auto lphi = adj.apply(phi);
            double a = 0.0, bb = 0.0, unorm = 0.0, pmax = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                a += phi[i] * lu[i] * g.width(i);
                bb += lphi[i] * u[i] * g.width(i);
                unorm += u[i] * g.width(i);
                pmax = std::max(pmax, phi[i]);
            }
            worst = std::max(worst, std::abs(a - bb) / (pmax * unorm));
        }
        checks.push_back({"duality", worst <= 1e-10, worst, 1e-10,
                          std::to_string(cfg.validate.pairs) + " random pairs, seed " + std::to_string(ctx.seed)});
    }
    {
        double worst = 0.0;
        for (int p = 0; p < 10; ++p) {
            const auto u = random_vector(rng, n);
            const auto r = macroscopic_balance(op, u);
            const double scale = std::abs(r.moment_rate) + std::abs(r.expected) + std::abs(r.truncation_flux);
            worst = std::max(worst, std::abs(r.residual) / scale);
        }
        checks.push_back({"macroscopic_balance", worst <= 1e-12, worst, 1e-12, "10 random densities"});
    }
    {
        const auto a = op.dense();
        double most_negative = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) most_negative = std::min(most_negative, a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        checks.push_back({"metzler_offdiagonal", most_negative >= 0.0, most_negative, 0.0,
                          "smallest off-diagonal operator entry"});
    }
    std::optional<EigenSolution> eig;
    try {
        eig = principal_eigenpair(model, v, ctx.eigen_options());
    } catch (const std::exception& e) {
        checks.push_back({"eigen_converged", false, 0.0, 0.0, e.what()});
    }
    if (eig) {
        checks.push_back({"eigen_residual", eig->residual <= eig->tolerance, eig->residual, eig->tolerance,
                          std::to_string(eig->iterations) + " iterations"});
        if (!eig->degenerate) {
            double min_u = 0.0;
            for (double x : eig->u) min_u = std::min(min_u, x);
            checks.push_back({"eigenvector_nonnegative", min_u >= 0.0, min_u, 0.0, "smallest entry of U"});
            const auto m = eigenvalue_from_moments(model, *eig);
            const double err = std::max(std::abs(m.count_form_closed() - eig->lambda),
                                        std::abs(m.mass_form_closed() - eig->lambda));
            checks.push_back({"moment_identities", err <= 1e-9, err, 1e-9,
                              "count and mass forms with boundary fluxes added back"});
        }
        if (auto ref = reference_lambda(c, v)) {
            const double rel = relative(eig->lambda, *ref);
            checks.push_back({"closed_form_lambda", rel <= 0.01, rel, 0.01,
                              "reference " + io::format_double(*ref)});
        } else {
            checks.push_back({"closed_form_lambda", std::nullopt, 0.0, 0.01, "no closed form for these coefficients"});
        }
        if (n <= 400) {
            const double s = dense_spectral_abscissa(op);
            const double err = std::abs(s + eig->lambda);
            const double tol = 1e-8 * std::max(1.0, std::abs(eig->lambda));
            checks.push_back({"dense_route", err <= tol, err, tol, "full dense eigendecomposition"});
        } else {
            checks.push_back({"dense_route", std::nullopt, 0.0, 0.0, "n > 400"});
        }
    }
    {
        IntegratorOptions o;
        o.t_end = std::min(10.0, cfg.validate.t_end);
        o.sample_interval = cfg.simulate.sample_interval;
        const auto u0 = rational_profile(g, 0.5);
        const auto tr = integrate(model, PolymerState(b.grid, c.vbar(), u0), o);
        checks.push_back({"conservation", tr.max_relative_residual <= 1e-8, tr.max_relative_residual, 1e-8,
                          "per-step residual relative to ||u||_1 + V over " + io::format_double(o.t_end) + " days"});
    }
    if (ctx.discrete) rec.results["discrete"] = discrete_comparison(ctx, rec, checks);

    if (ctx.dump_operator) {
        std::vector<std::string> header{"x"};
        for (std::size_t j = 0; j < n; ++j) header.push_back(io::format_double(g.center(j)));
        io::CsvTable t(header);
        const auto a = op.dense();
        std::vector<double> row(n + 1);
        for (std::size_t i = 0; i < n; ++i) {
            row[0] = g.center(i);
            for (std::size_t j = 0; j < n; ++j)
                row[j + 1] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            t.add_row(row);
        }
        const std::string name = ctx.stem + "-operator.csv";
        io::write_file(ctx.dir / name, t.str());
        rec.files.push_back(name);
    }

    Json arr = Json::array();
    int failed = 0, passed = 0, skipped = 0;
    for (const auto& ch : checks) {
        arr.push_back(check_json(ch));
        if (!ch.passed) ++skipped;
        else if (*ch.passed) ++passed;
        else {
            ++failed;
            rec.errors.push_back("check failed: " + ch.name);
        }
    }
    rec.results["v"] = json_number(v);
    rec.results["checks"] = std::move(arr);
    rec.results["passed"] = passed;
    rec.results["failed"] = failed;
    rec.results["skipped"] = skipped;
    rec.diagnostics["grid"] = grid_json(g, cfg.grid.spacing);
    rec.provenance.grid_hash = io::hex64(g.hash());
    if (failed > 0) rec.status = "partial";
}

}  // namespace harness_detail

/// Runs one experiment and writes its files. Never throws for configuration or numerical
/// failures: they end up in the summary JSON and the exit code.
inline RunOutcome run(const RunConfig& config, Experiment experiment, const RunOptions& options = {}) {
    using namespace harness_detail;
    RunConfig cfg = config;
    if (options.seed) cfg.seed = *options.seed;
    if (options.threads) cfg.threads = *options.threads;
    if (options.out_dir) cfg.output.dir = *options.out_dir;

    std::string extra = std::string("experiment=") + to_string(experiment) + "\n";
    if (options.dump_operator) extra += "dump_operator\n";
    if (options.discrete) extra += "discrete\n";
    const std::string digest = cfg.digest(extra);

    RunOutcome outcome;
    ExperimentRecord& rec = outcome.record;
    rec.experiment = to_string(experiment);
    rec.config = cfg.echo;
    rec.provenance.seed = cfg.seed;
    rec.provenance.digest = digest;

    Context ctx{cfg, experiment, cfg.output.dir, std::string(to_string(experiment)) + "-" + digest,
                cfg.threads, cfg.seed, options.dump_operator, options.discrete};
    outcome.summary = ctx.dir / (ctx.stem + "-summary.json");

    try {
        if (cfg.experiment && *cfg.experiment != experiment)
            throw ConfigError({{0, "run.experiment",
                                std::string("configuration is for '") + to_string(*cfg.experiment) +
                                    "' but '" + to_string(experiment) + "' was requested"}});
        if (options.discrete && experiment != Experiment::Validate)
            throw ConfigError({{0, "--discrete", "only valid with validate"}});
        if (options.dump_operator && experiment != Experiment::Validate)
            throw ConfigError({{0, "--dump-operator", "only valid with validate"}});
        switch (experiment) {
            case Experiment::Eigen: run_eigen(ctx, rec); break;
            case Experiment::Steady: run_steady(ctx, rec); break;
            case Experiment::Simulate: run_simulate(ctx, rec); break;
            case Experiment::Sweep: run_sweep(ctx, rec); break;
            case Experiment::Validate: run_validate(ctx, rec); break;
        }
    } catch (const ConfigError& e) {
        rec.status = "error";
        for (const auto& issue : e.issues()) {
            std::string msg;
            if (issue.line > 0) msg += "line " + std::to_string(issue.line) + ": ";
            if (!issue.field.empty()) msg += issue.field + ": ";
            rec.errors.push_back(msg + issue.message);
        }
    } catch (const std::exception& e) {
        rec.status = "error";
        rec.errors.push_back(e.what());
    }
    outcome.exit_code = rec.status == "ok" ? 0 : (rec.status == "partial" ? 2 : 1);
    io::write_file(outcome.summary, dump_record(rec));
    return outcome;
}

/// Summary record for a configuration that failed to parse; written like any other summary.
inline RunOutcome config_failure(const ConfigError& error, Experiment experiment, const std::string& out_dir) {
    RunOutcome outcome;
    ExperimentRecord& rec = outcome.record;
    rec.experiment = to_string(experiment);
    rec.status = "error";
    for (const auto& issue : error.issues()) {
        std::string msg;
        if (issue.line > 0) msg += "line " + std::to_string(issue.line) + ": ";
        if (!issue.field.empty()) msg += issue.field + ": ";
        rec.errors.push_back(msg + issue.message);
    }
    rec.provenance.digest = "invalid";
    outcome.exit_code = 1;
    outcome.summary = std::filesystem::path(out_dir) / (std::string(to_string(experiment)) + "-invalid-summary.json");
    io::write_file(outcome.summary, dump_record(rec));
    return outcome;
}

}  // namespace prion
