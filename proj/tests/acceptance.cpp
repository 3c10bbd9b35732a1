#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "prion/config.hpp"
#include "prion/eigen_solver.hpp"
#include "prion/harness.hpp"
#include "prion/io.hpp"
#include "prion/steady_state.hpp"

namespace fs = std::filesystem;
using namespace prion;

namespace {

constexpr double kTau0 = 0.001;
constexpr double kBeta0 = 0.03;
constexpr double kMu0 = 0.05;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (detail.tellp() > 0) detail << "; ";
        detail << (ok ? "" : "FAILED ") << what;
    }
};

std::string fmt(double x, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

RunConfig load(const std::string& name) {
    return parse_config(io::read_file(fs::path(PRION_CONFIG_DIR) / name));
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("prion-acceptance-" + name);
    fs::remove_all(dir);
    return dir;
}

RunOutcome run_in(const RunConfig& cfg, Experiment e, const std::string& name, RunOptions opts = {}) {
    opts.out_dir = scratch(name).string();
    return run(cfg, e, opts);
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir))
        out[entry.path().filename().string()] = io::read_file(entry.path());
    return out;
}

/// Least-squares slope of log(error) against log(n), negated: the observed convergence order.
double observed_order(const std::vector<double>& ns, const std::vector<double>& errors) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const double x = std::log(ns[i]), y = std::log(errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return -(k * sxy - sx * sy) / (k * sxx - sx * sx);
}

std::vector<double> phi_profile(const SizeGrid& g, double v) {
    const double len = closed_form::constant_length(kTau0, kBeta0, v);
    return project(g, [len](double x) { return closed_form::constant_profile(x, len); });
}

double l1_relative(const SizeGrid& g, const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::abs(a[i] - b[i]) * g.width(i);
        den += std::abs(b[i]) * g.width(i);
    }
    return num / den;
}

Verdict closed_form_eigenvalue() {
    Verdict v;
    const auto cfg = load("eigen-regression.cfg");
    const auto start = std::chrono::steady_clock::now();
    const DiscreteModel model(cfg.coeffs, cfg.make_grid());
    for (double vv : {10.0, 100.0, 600.0}) {
        const double lam = principal_eigenpair(model, vv).lambda;
        const double e = rel(lam, closed_form::constant_lambda(kTau0, kBeta0, kMu0, vv));
        v.require(e <= 0.01, "V=" + fmt(vv) + " rel err " + fmt(e, 3) + " <= 0.01");
    }
    const double elapsed = seconds_since(start);
    v.require(elapsed < 10.0, "n=800 solves " + fmt(elapsed, 3) + " s < 10 s");
    const std::vector<double> ns{100, 200, 400, 800};
    for (double vv : {10.0, 100.0, 600.0}) {
        std::vector<double> errs;
        for (double n : ns) {
            auto c = cfg;
            c.grid.n = static_cast<std::size_t>(n);
            const DiscreteModel m(c.coeffs, c.make_grid());
            errs.push_back(std::abs(principal_eigenpair(m, vv).lambda -
                                    closed_form::constant_lambda(kTau0, kBeta0, kMu0, vv)));
        }
        const double order = observed_order(ns, errs);
        v.require(order >= 0.8, "order at V=" + fmt(vv) + " " + fmt(order, 3) + " >= 0.8");
    }
    return v;
}

struct SteadyFixture {
    RunConfig cfg;
    std::unique_ptr<DiscreteModel> model;
    SteadyState ss;
    double seconds = 0.0;
};

const SteadyFixture& constant_steady() {
    static const SteadyFixture f = [] {
        SteadyFixture s;
        s.cfg = load("fig3-left.cfg");
        const auto start = std::chrono::steady_clock::now();
        s.model = std::make_unique<DiscreteModel>(s.cfg.coeffs, s.cfg.make_grid());
        RootOptions opts;
        opts.tolerance = s.cfg.steady.tolerance;
        opts.v_max = s.cfg.steady.v_max;
        opts.eigen = {s.cfg.eigen.tolerance, s.cfg.eigen.max_iterations};
        s.ss = build_steady_state(*s.model, opts);
        s.seconds = seconds_since(start);
        return s;
    }();
    return f;
}

Verdict steady_identities() {
    Verdict v;
    const auto& f = constant_steady();
    v.require(f.ss.exists, "steady state exists");
    if (!f.ss.exists) return v;
    const double v_inf = kMu0 * kMu0 / (kTau0 * kBeta0);
    const auto& c = f.cfg.coeffs;
    const double rho = (c.lambda - c.gamma * v_inf) / (v_inf * kTau0);
    v.require(rel(f.ss.v_inf, v_inf) <= 0.01, "V_inf " + fmt(f.ss.v_inf, 6) + " vs " + fmt(v_inf, 6) + " within 1%");
    v.require(rel(*f.ss.rho_inf, rho) <= 0.02, "rho_inf " + fmt(*f.ss.rho_inf, 6) + " vs " + fmt(rho, 6) + " within 2%");
    v.require(rel(f.ss.center_of_mass, kMu0 / kBeta0) <= 0.01,
              "center of mass " + fmt(f.ss.center_of_mass, 6) + " vs " + fmt(kMu0 / kBeta0, 6) + " within 1%");
    v.require(f.seconds < 10.0, "runtime " + fmt(f.seconds, 3) + " s < 10 s");
    return v;
}

Verdict profile_oracle() {
    Verdict v;
    const auto& f = constant_steady();
    if (!f.ss.exists) {
        v.require(false, "steady state exists");
        return v;
    }
    const auto& g = f.model->grid();
    const double e = l1_relative(g, f.ss.profile, phi_profile(g, f.ss.v_inf));
    v.require(g.size() == 800, "n = " + std::to_string(g.size()));
    v.require(e <= 0.02, "relative L1 error " + fmt(e, 3) + " <= 0.02");
    return v;
}

Verdict adjoint_oracle() {
    Verdict v;
    const auto cfg = load("eigen-regression.cfg");
    const DiscreteModel model(cfg.coeffs, cfg.make_grid());
    const auto& g = model.grid();
    for (double vv : {10.0, 100.0, 600.0}) {
        const auto adj = adjoint_eigenpair(model, vv);
        const double len = closed_form::constant_length(kTau0, kBeta0, vv);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.size() && g.center(i) <= 0.8 * g.xmax(); ++i) {
            const double exact = 1.0 + g.center(i) / len;
            worst = std::max(worst, std::abs(adj.phi[i] - exact) / exact);
        }
        v.require(worst <= 0.02, "phi sup err at V=" + fmt(vv) + " " + fmt(worst, 3) + " <= 0.02");
    }
    const auto aff = load("affine.cfg");
    const DiscreteModel am(aff.coeffs, aff.make_grid());
    const auto& tau = std::get<Affine>(aff.coeffs.tau);
    const auto& beta = std::get<Affine>(aff.coeffs.beta);
    const double mu = std::get<Constant>(aff.coeffs.mu).value;
    const double vv = aff.eigen.v.front();
    const double exact = closed_form::affine_lambda(beta.intercept, beta.slope, tau.intercept, tau.slope, mu, vv);
    const double lam = principal_eigenpair(am, vv).lambda;
    v.require(std::abs(exact - (-0.03831)) <= 5e-6, "affine root " + fmt(exact, 6) + " ~ -0.03831");
    v.require(rel(lam, exact) <= 0.02, "affine lambda " + fmt(lam, 6) + " within 2%");
    return v;
}

const RunOutcome& fig5_simulation() {
    static const RunOutcome out = run_in(load("simulate-fig5.cfg"), Experiment::Simulate, "simulate-fig5");
    return out;
}

Verdict conservation() {
    Verdict v;
    const auto& out = fig5_simulation();
    v.require(out.record.status == "ok", "run status " + out.record.status);
    if (out.record.status != "ok") return v;
    const auto& d = out.record.diagnostics;
    const double res = d.at("max_relative_residual").get<double>();
    const double t_end = out.record.results.at("final").at("t").get<double>();
    v.require(t_end >= 200.0, "run length " + fmt(t_end) + " days");
    v.require(res <= 1e-8, "max per-step residual / (||u||_1 + V) " + fmt(res, 3) + " <= 1e-8");
    v.require(true, "truncation flux accounted " + fmt(d.at("truncation_flux_total").get<double>(), 4));
    return v;
}

Verdict linear_regime() {
    Verdict v;
    const auto& out = fig5_simulation();
    if (out.record.status != "ok") {
        v.require(false, "run status " + out.record.status);
        return v;
    }
    const auto& r = out.record.results;
    const auto& tau = std::get<Bell>(load("simulate-fig5.cfg").coeffs.tau);
    v.require(tau.amplitude == 0.01, "bell amplitude H = " + fmt(tau.amplitude));
    const double predicted = -r.at("lambda_vbar").get<double>();
    const double rate = r.at("growth").at("rate").get<double>();
    const double drift = r.at("growth").at("v_drift").get<double>();
    v.require(drift < 0.05, "V drift " + fmt(drift, 3) + " < 0.05");
    v.require(rel(rate, predicted) <= 0.02,
              "fitted rate " + fmt(rate, 5) + " vs -Lambda(vbar) " + fmt(predicted, 5) + " within 2%");
    return v;
}

Verdict log_law() {
    Verdict v;
    const auto out = run_in(load("incubation.cfg"), Experiment::Sweep, "incubation");
    v.require(out.record.status == "ok", "run status " + out.record.status);
    if (out.record.status != "ok") return v;
    const auto& r = out.record.results;
    const double decades = r.at("summary").at("decades").get<double>();
    const double slope = r.at("summary").at("log_law_slope").get<double>();
    const auto cfg = load("incubation.cfg");
    const double lam = closed_form::constant_lambda(kTau0, kBeta0, kMu0, cfg.coeffs.vbar());
    // T = log(threshold / dose) / |Lambda|: slope -1/|Lambda| against log(dose).
    const double expected = -1.0 / std::abs(lam);
    v.require(decades >= 3.0 - 1e-12, "dose span " + fmt(decades) + " decades");
    v.require(rel(slope, expected) <= 0.10, "slope " + fmt(slope, 5) + " vs " + fmt(expected, 5) + " within 10%");
    bool found = false;
    for (const auto& item : r.at("items")) {
        const auto& inc = item.at("results").at("incubation");
        const double ratio = inc.at("threshold").get<double>() / inc.at("inoculation").get<double>();
        if (std::abs(ratio - 1e3) > 1e-6 * 1e3) continue;
        found = true;
        const double t = inc.at("t_incubation").get<double>();
        const double point = std::log(1e3) / 0.08416;
        v.require(rel(t, point) <= 0.10, "T(ratio 1e3) " + fmt(t, 5) + " vs " + fmt(point, 4) + " within 10%");
    }
    v.require(found, "dose with threshold ratio 1e3 present");
    return v;
}

Verdict bimodality() {
    Verdict v;
    const auto right = run_in(load("fig3-right.cfg"), Experiment::Steady, "fig3-right");
    const auto& r = right.record.results;
    if (right.record.status != "ok") {
        v.require(false, "fig3-right status " + right.record.status);
        return v;
    }
    v.require(r.at("n_modes").get<int>() == 2, "bell n_modes " + std::to_string(r.at("n_modes").get<int>()) + " == 2");
    const auto& b = r.at("bimodality");
    v.require(b.at("necessary_condition_met").get<bool>(),
              "V_inf min tau'' " + fmt(b.at("v_inf_min_tau_second").get<double>()) + " < " +
                  fmt(b.at("minus_three_beta0").get<double>()));

    const auto& f = constant_steady();
    const auto control = bimodality_report(*f.model, f.ss.v_inf, f.ss.u_inf);
    v.require(control.n_modes == 1, "constant tau n_modes " + std::to_string(control.n_modes) + " == 1");

    const auto sweep = run_in(load("fig4.cfg"), Experiment::Sweep, "fig4");
    if (sweep.record.status != "ok") {
        v.require(false, "fig4 status " + sweep.record.status);
        return v;
    }
    std::vector<double> m, split, com;
    for (const auto& item : sweep.record.results.at("items")) {
        m.push_back(item.at("value").get<double>());
        split.push_back(item.at("results").at("bimodality").at("split_strength").get<double>());
        com.push_back(item.at("results").at("center_of_mass").get<double>());
    }
    std::size_t best = 0, nearest = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (split[i] > split[best]) best = i;
        if (std::abs(m[i] - com[i]) < std::abs(m[nearest] - com[nearest])) nearest = i;
    }
    v.require(best == nearest, "split maximal at m=" + fmt(m[best]) + ", nearest center of mass m=" + fmt(m[nearest]));
    bool ordered = true;
    for (std::size_t i = 0; i + 1 < m.size(); ++i) {
        if (i + 1 <= best && split[i] > split[i + 1]) ordered = false;
        if (i >= best && split[i + 1] > split[i]) ordered = false;
    }
    v.require(ordered, "split strength decreases away from the peak on both sides");
    const double far = 4.0 * kMu0 / kBeta0;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (std::abs(m[i] - far) < 1e-9)
            v.require(split[i] < split[best], "m=4 mu0/beta0 split " + fmt(split[i], 3) + " < " + fmt(split[best], 3));
    return v;
}

Verdict fitness_vs_bimodality() {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    const auto out = run_in(load("fig7.cfg"), Experiment::Sweep, "fig7");
    const double elapsed = seconds_since(start);
    if (out.record.status != "ok") {
        v.require(false, "fig7 status " + out.record.status);
        return v;
    }
    std::vector<double> alpha, growth;
    std::vector<int> modes;
    for (const auto& item : out.record.results.at("items")) {
        alpha.push_back(item.at("value").get<double>());
        growth.push_back(item.at("results").at("growth_rate").get<double>());
        modes.push_back(item.at("results").at("n_modes").get<int>());
    }
    const bool grid_ok = alpha.size() == 16 && rel(alpha.front(), 1e-3) < 1e-12 && rel(alpha.back(), 1.0) < 1e-12;
    v.require(grid_ok, "alpha = 10^(-3:0.2:0), " + std::to_string(alpha.size()) + " values");
    std::size_t best = 0;
    for (std::size_t i = 0; i < growth.size(); ++i)
        if (growth[i] > growth[best]) best = i;
    const bool interior = best > 0 && best + 1 < growth.size();
    v.require(interior, "growth maximizer alpha=" + fmt(alpha[best], 3) + " interior");
    std::size_t onset = modes.size();
    for (std::size_t i = 0; i < modes.size(); ++i)
        if (modes[i] >= 2) {
            onset = i;
            break;
        }
    v.require(onset < modes.size(), "bimodality onset found");
    if (onset < modes.size())
        v.require(alpha[onset] > alpha[best], "onset alpha=" + fmt(alpha[onset], 3) + " > maximizer " + fmt(alpha[best], 3));
    v.require(elapsed < 120.0, "runtime " + fmt(elapsed, 3) + " s < 120 s");
    return v;
}

Verdict stability_dichotomy() {
    Verdict v;
    const auto stable = run_in(load("stability-stable.cfg"), Experiment::Simulate, "stable");
    const auto unstable = run_in(load("stability-unstable.cfg"), Experiment::Simulate, "unstable");
    if (stable.record.status != "ok" || unstable.record.status != "ok") {
        v.require(false, "run status " + stable.record.status + "/" + unstable.record.status);
        return v;
    }
    const auto& s = stable.record.results;
    const double lam = s.at("lambda_vbar").get<double>();
    const double rate = s.at("fitted_rate").get<double>();
    v.require(s.at("verdict").get<std::string>() == "stable", "lambda=240 verdict " + s.at("verdict").get<std::string>());
    v.require(rate < 0.0 && rel(-rate, lam) <= 0.05,
              "decay rate " + fmt(rate, 4) + " vs -Lambda(vbar) " + fmt(-lam, 4) + " within 5%");
    v.require(rel(s.at("final_v").get<double>(), s.at("vbar").get<double>()) <= 1e-6, "V -> vbar");
    const auto& u = unstable.record.results;
    const double v_inf = closed_form::constant_v_inf(kTau0, kBeta0, kMu0);
    const double final_v = u.at("final_v").get<double>();
    v.require(u.at("verdict").get<std::string>() == "unstable", "lambda=2400 verdict " + u.at("verdict").get<std::string>());
    v.require(rel(final_v, v_inf) <= 0.02, "final V " + fmt(final_v, 6) + " vs V_inf " + fmt(v_inf, 6) + " within 2%");
    v.require(s.at("lambda_scan").at("decreasing").get<bool>() && u.at("lambda_scan").at("decreasing").get<bool>(),
              "Lambda(V) decreasing over both scans");
    return v;
}

Verdict discrete_oracle() {
    Verdict v;
    RunOptions opts;
    opts.discrete = true;
    const auto out = run_in(load("validate.cfg"), Experiment::Validate, "discrete", opts);
    const auto& d = out.record.results.at("discrete");
    const double sup_v = d.at("uninfected").at("sup_v").get<double>();
    v.require(sup_v <= 1e-12, "uninfected sup |V_d/S - V| / V " + fmt(sup_v, 3) + " <= 1e-12");
    const auto& gd = d.at("infected").at("growth_discrepancy");
    const double g = gd.is_null() ? std::numeric_limits<double>::infinity() : gd.get<double>();
    v.require(g <= 0.05, "infected growth discrepancy " + fmt(g, 3) + " <= 0.05");
    return v;
}

Verdict determinism() {
    Verdict v;
    const auto cfg = load("fig7.cfg");
    RunOptions one, four;
    one.threads = 1;
    four.threads = 4;
    const auto a = run_in(cfg, Experiment::Sweep, "det-a", one);
    const auto b = run_in(cfg, Experiment::Sweep, "det-b", one);
    const auto c = run_in(cfg, Experiment::Sweep, "det-c", four);
    const auto ta = read_tree(a.summary.parent_path());
    v.require(ta == read_tree(b.summary.parent_path()), "repeat run byte-identical (" + std::to_string(ta.size()) + " files)");
    v.require(ta == read_tree(c.summary.parent_path()), "1 vs 4 threads byte-identical");
    RunOptions seeded;
    seeded.discrete = true;
    const auto cfgv = load("validate.cfg");
    const auto x = run_in(cfgv, Experiment::Validate, "det-x", seeded);
    const auto y = run_in(cfgv, Experiment::Validate, "det-y", seeded);
    v.require(read_tree(x.summary.parent_path()) == read_tree(y.summary.parent_path()),
              "seeded validate run byte-identical");
    return v;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Verdict()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "closed-form eigenvalue", closed_form_eigenvalue},
        {2, "steady-state identities", steady_identities},
        {3, "profile oracle", profile_oracle},
        {4, "adjoint oracle", adjoint_oracle},
        {5, "conservation", conservation},
        {6, "linear-regime consistency", linear_regime},
        {7, "log law", log_law},
        {8, "bimodality", bimodality},
        {9, "fitness vs bimodality", fitness_vs_bimodality},
        {10, "stability dichotomy", stability_dichotomy},
        {11, "discrete oracle", discrete_oracle},
        {12, "determinism", determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        if (!v.pass) ++failed;
        std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
