#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prion/coefficients.hpp"
#include "prion/dynamics.hpp"
#include "prion/error.hpp"
#include "prion/grid.hpp"
#include "prion/io.hpp"
#include "prion/model.hpp"

// Run configuration: a line-oriented text format of [section] headers and key = value pairs.
// '#' starts a comment. Every key is checked against a fixed schema, and all problems are
// collected before anything is reported.
//
//   [model]   lambda gamma x0 tau beta mu
//   [grid]    n xmax spacing ratio
//   [run]     experiment seed threads
//   [eigen]   v tolerance max_iterations adjoint hypotheses
//   [steady]  v_max tolerance
//   [simulate] t_end sample_interval v0 initial dose snapshots threshold threshold_ratio
//              transport cfl mode epsilon
//   [sweep]   axis mode values
//   [validate] v pairs scale n0 t_end dose
//   [output]  dir csv

namespace prion {

enum class Experiment { Eigen, Steady, Simulate, Sweep, Validate };

inline const char* to_string(Experiment e) {
    switch (e) {
        case Experiment::Eigen: return "eigen";
        case Experiment::Steady: return "steady";
        case Experiment::Simulate: return "simulate";
        case Experiment::Sweep: return "sweep";
        default: return "validate";
    }
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
    if (s == "eigen") return Experiment::Eigen;
    if (s == "steady") return Experiment::Steady;
    if (s == "simulate") return Experiment::Simulate;
    if (s == "sweep") return Experiment::Sweep;
    if (s == "validate") return Experiment::Validate;
    return std::nullopt;
}

struct GridSpec {
    std::size_t n = 800;
    std::optional<double> xmax;
    Spacing spacing = Spacing::Uniform;
    double ratio = 1.0;
};

struct EigenSpec {
    std::vector<double> v;  // empty selects {lambda/gamma}
    double tolerance = 1e-10;
    int max_iterations = 200;
    bool adjoint = false;
    bool hypotheses = false;
};

struct SteadySpec {
    double v_max = 0.0;
    double tolerance = 1e-8;
};

enum class InitialProfile { Rational, Zero, Eigen };
enum class SimulateMode { Trajectory, Stability };

struct SimulateSpec {
    double t_end = 200.0;
    double sample_interval = 0.5;
    std::optional<double> v0;  // default lambda/gamma
    InitialProfile initial = InitialProfile::Rational;
    double initial_scale = 0.5;  // rational(c): c x^2 / (1 + x^4); eigen(c): c * U(v0)
    double dose = 1.0;
    std::vector<double> snapshots{96.0};
    std::optional<double> threshold;
    double threshold_ratio = 1000.0;
    TransportOrder transport = TransportOrder::First;
    double cfl = 0.9;
    SimulateMode mode = SimulateMode::Trajectory;
    double epsilon = 1e-3;
};

enum class SweepAxis { Amplitude, Beta0, Alpha, Center, Dose };
enum class SweepMode { Dynamics, Eigen, Steady };

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::Amplitude: return "H";
        case SweepAxis::Beta0: return "beta0";
        case SweepAxis::Alpha: return "alpha";
        case SweepAxis::Center: return "m";
        default: return "dose";
    }
}

inline const char* to_string(SweepMode m) {
    switch (m) {
        case SweepMode::Dynamics: return "dynamics";
        case SweepMode::Eigen: return "eigen";
        default: return "steady";
    }
}

struct SweepSpec {
    std::optional<SweepAxis> axis;
    std::optional<SweepMode> mode;
    std::vector<double> values;
};

struct ValidateSpec {
    std::optional<double> v;  // operator level for checks and the dump; default lambda/gamma
    int pairs = 100;
    double scale = 10.0;
    int n0 = 1;
    double t_end = 150.0;
    double dose = 1.0;
};

struct OutputSpec {
    std::string dir = "out";
    bool csv = true;  // the summary JSON is always written
};

struct RunConfig {
    CoefficientSet coeffs;
    GridSpec grid;
    std::optional<Experiment> experiment;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    EigenSpec eigen;
    SteadySpec steady;
    SimulateSpec simulate;
    SweepSpec sweep;
    ValidateSpec validate;
    OutputSpec output;
    /// Normalized "section.key = value" lines of everything that was set, in schema order.
    std::vector<std::pair<std::string, std::string>> echo;

    /// Truncation bound for a coefficient set: the configured value, else the default rule.
    double xmax_for(const CoefficientSet& c) const {
        if (grid.xmax) return *grid.xmax;
        if (auto d = default_xmax(c)) return *d;
        throw ConfigError({{0, "grid.xmax", "required unless beta = beta1 + beta0 x with beta0 > 0"}});
    }
    double xmax() const { return xmax_for(coeffs); }

    SizeGrid make_grid_for(const CoefficientSet& c) const {
        if (grid.spacing == Spacing::Geometric)
            return SizeGrid::geometric(c.x0, xmax_for(c), grid.n, grid.ratio);
        return SizeGrid::uniform(c.x0, xmax_for(c), grid.n);
    }
    SizeGrid make_grid() const { return make_grid_for(coeffs); }

    /// Digest of the normalized configuration text plus the seed; names output files.
    /// Thread count and output directory do not change results and are left out.
    std::string digest(std::string_view extra = {}) const {
        std::string text;
        for (const auto& [k, v] : echo)
            if (k != "run.threads" && k != "output.dir") text += k + "=" + v + "\n";
        text += extra;
        text += "seed=" + std::to_string(seed) + "\n";
        return io::hex64(io::fnv1a(text));
    }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_number(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = t.data();
    if (*first == '+') ++first;
    auto res = std::from_chars(first, t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v))
        return std::nullopt;
    return v;
}

inline std::vector<std::string> split_top(std::string_view s, char sep) {
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

struct Reader {
    std::vector<ConfigIssue>& issues;
    int line;
    std::string field;

    void fail(const std::string& msg) { issues.push_back({line, field, msg}); }

    std::optional<double> number(const std::string& text) {
        auto v = parse_number(text);
        if (!v) fail("expected a number, got '" + text + "'");
        return v;
    }

    std::optional<long long> integer(const std::string& text) {
        auto v = parse_number(text);
        if (!v || std::floor(*v) != *v || std::abs(*v) > 9.0e15) {
            fail("expected an integer, got '" + text + "'");
            return std::nullopt;
        }
        return static_cast<long long>(*v);
    }

    std::optional<bool> boolean(const std::string& text) {
        if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
        if (text == "false" || text == "no" || text == "off" || text == "0") return false;
        fail("expected true or false, got '" + text + "'");
        return std::nullopt;
    }

    /// Comma-separated numbers, logspace(a, b, step) = 10^(a:step:b), or
    /// linspace(a, b, count).
    std::optional<std::vector<double>> list(const std::string& text) {
        auto fn = [&](std::string_view name) -> std::optional<std::vector<double>> {
            const std::string inner = text.substr(name.size() + 1, text.size() - name.size() - 2);
            const auto args = split_top(inner, ',');
            if (args.size() != 3) {
                fail(std::string(name) + " takes three arguments");
                return std::nullopt;
            }
            auto a = number(args[0]), b = number(args[1]), c = number(args[2]);
            if (!a || !b || !c) return std::nullopt;
            std::vector<double> out;
            if (name == "logspace") {
                if (!(*c > 0.0) || *b < *a) {
                    fail("logspace needs a <= b and a positive step");
                    return std::nullopt;
                }
                const auto count = static_cast<long long>(std::floor((*b - *a) / *c + 1e-9));
                for (long long k = 0; k <= count; ++k)
                    out.push_back(std::pow(10.0, *a + static_cast<double>(k) * *c));
            } else {
                if (!(*c >= 2.0) || std::floor(*c) != *c) {
                    fail("linspace needs an integer count >= 2");
                    return std::nullopt;
                }
                const auto count = static_cast<long long>(*c);
                for (long long k = 0; k < count; ++k)
                    out.push_back(*a + (*b - *a) * static_cast<double>(k) / static_cast<double>(count - 1));
            }
            return out;
        };
        if (text.starts_with("logspace(") && text.ends_with(")")) return fn("logspace");
        if (text.starts_with("linspace(") && text.ends_with(")")) return fn("linspace");
        std::vector<double> out;
        bool ok = true;
        for (const auto& part : split_top(text, ',')) {
            auto v = number(part);
            if (!v) ok = false;
            else out.push_back(*v);
        }
        if (!ok) return std::nullopt;
        return out;
    }

    /// constant(c) | affine(c0, c1) | bell(base, amplitude, center, sigma | sigma2=...)
    /// | scaled_bell(base, alpha, center). Arguments are positional or name=value.
    std::optional<Shape> shape(const std::string& text) {
        const auto open = text.find('(');
        if (open == std::string::npos || !text.ends_with(")")) {
            fail("expected a shape such as constant(0.05), got '" + text + "'");
            return std::nullopt;
        }
        const std::string kind = trim(std::string_view(text).substr(0, open));
        const auto args = split_top(std::string_view(text).substr(open + 1, text.size() - open - 2), ',');
        struct Param {
            std::string name;
            std::optional<double> value;
        };
        std::vector<std::string> names;
        if (kind == "constant") names = {"value"};
        else if (kind == "affine") names = {"intercept", "slope"};
        else if (kind == "bell") names = {"base", "amplitude", "center", "sigma"};
        else if (kind == "scaled_bell") names = {"base", "alpha", "center"};
        else {
            fail("unknown shape '" + kind + "' (constant, affine, bell, scaled_bell)");
            return std::nullopt;
        }
        std::map<std::string, double> got;
        bool ok = true;
        std::size_t position = 0;
        for (const auto& arg : args) {
            if (arg.empty()) {
                fail("empty argument in '" + text + "'");
                ok = false;
                continue;
            }
            const auto eq = arg.find('=');
            std::string name;
            std::string value;
            if (eq == std::string::npos) {
                if (position >= names.size()) {
                    fail("too many arguments for " + kind);
                    ok = false;
                    continue;
                }
                name = names[position++];
                value = arg;
            } else {
                name = trim(std::string_view(arg).substr(0, eq));
                value = trim(std::string_view(arg).substr(eq + 1));
                const bool known = std::find(names.begin(), names.end(), name) != names.end() ||
                                   (kind == "bell" && name == "sigma2");
                if (!known) {
                    fail("unknown parameter '" + name + "' for " + kind);
                    ok = false;
                    continue;
                }
            }
            if (got.count(name)) {
                fail("parameter '" + name + "' given twice");
                ok = false;
                continue;
            }
            auto v = number(value);
            if (!v) ok = false;
            else got[name] = *v;
        }
        if (kind == "bell" && got.count("sigma2")) {
            if (got.count("sigma")) {
                fail("give either sigma or sigma2, not both");
                ok = false;
            } else if (!(got["sigma2"] > 0.0)) {
                fail("sigma2 must be > 0");
                ok = false;
            } else {
                got["sigma"] = std::sqrt(got["sigma2"]);
            }
        }
        for (const auto& n : names) {
            if (!got.count(n)) {
                fail(kind + " is missing '" + n + "'");
                ok = false;
            }
        }
        if (!ok) return std::nullopt;
        if (kind == "constant") return Shape{Constant{got["value"]}};
        if (kind == "affine") return Shape{Affine{got["intercept"], got["slope"]}};
        if (kind == "bell") {
            if (!(got["sigma"] > 0.0)) {
                fail("bell sigma must be > 0");
                return std::nullopt;
            }
            return Shape{Bell{got["base"], got["amplitude"], got["center"], got["sigma"]}};
        }
        if (!(got["alpha"] > 0.0)) {
            fail("scaled_bell alpha must be > 0");
            return std::nullopt;
        }
        return Shape{ScaledBell{got["base"], got["alpha"], got["center"]}};
    }
};

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& schema() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> s = {
        {"model", {"lambda", "gamma", "x0", "tau", "beta", "mu"}},
        {"grid", {"n", "xmax", "spacing", "ratio"}},
        {"run", {"experiment", "seed", "threads"}},
        {"eigen", {"v", "tolerance", "max_iterations", "adjoint", "hypotheses"}},
        {"steady", {"v_max", "tolerance"}},
        {"simulate",
         {"t_end", "sample_interval", "v0", "initial", "dose", "snapshots", "threshold",
          "threshold_ratio", "transport", "cfl", "mode", "epsilon"}},
        {"sweep", {"axis", "mode", "values"}},
        {"validate", {"v", "pairs", "scale", "n0", "t_end", "dose"}},
        {"output", {"dir", "csv"}},
    };
    return s;
}

inline std::string collapse_spaces(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

}  // namespace config_detail

/// Parses and validates configuration text. Throws ConfigError listing every problem.
inline RunConfig parse_config(std::string_view text) {
    using namespace config_detail;
    std::vector<ConfigIssue> issues;
    struct Entry {
        std::string value;
        int line;
    };
    std::map<std::string, std::map<std::string, Entry>> entries;

    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = trim(raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                issues.push_back({line_no, "", "malformed section header '" + line + "'"});
                section.clear();
                continue;
            }
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            const auto& sc = schema();
            if (std::none_of(sc.begin(), sc.end(), [&](const auto& p) { return p.first == section; })) {
                issues.push_back({line_no, section, "unknown section"});
                section = "?";
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            issues.push_back({line_no, "", "expected 'key = value', got '" + line + "'"});
            continue;
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = collapse_spaces(trim(std::string_view(line).substr(eq + 1)));
        if (section.empty()) {
            issues.push_back({line_no, key, "key outside of any section"});
            continue;
        }
        if (section == "?") continue;  // already reported
        const auto& sc = schema();
        const auto it = std::find_if(sc.begin(), sc.end(), [&](const auto& p) { return p.first == section; });
        if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
            issues.push_back({line_no, section + "." + key, "unknown key"});
            continue;
        }
        if (value.empty()) {
            issues.push_back({line_no, section + "." + key, "empty value"});
            continue;
        }
        auto& sec = entries[section];
        if (sec.count(key)) {
            issues.push_back({line_no, section + "." + key,
                              "duplicate key (first set on line " + std::to_string(sec[key].line) + ")"});
            continue;
        }
        sec[key] = {value, line_no};
    }

    RunConfig cfg;
    auto get = [&](const std::string& sec, const std::string& key) -> const Entry* {
        auto s = entries.find(sec);
        if (s == entries.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };
    auto reader = [&](const std::string& sec, const std::string& key, const Entry& e) {
        return Reader{issues, e.line, sec == "model" ? key : sec + "." + key};
    };
    auto num = [&](const std::string& sec, const std::string& key, auto&& assign) {
        if (const Entry* e = get(sec, key)) {
            auto r = reader(sec, key, *e);
            if (auto v = r.number(e->value)) assign(*v, r);
        }
    };
    auto boolean = [&](const std::string& sec, const std::string& key, bool& dst) {
        if (const Entry* e = get(sec, key)) {
            auto r = reader(sec, key, *e);
            if (auto v = r.boolean(e->value)) dst = *v;
        }
    };
    auto list = [&](const std::string& sec, const std::string& key, auto&& assign) {
        if (const Entry* e = get(sec, key)) {
            auto r = reader(sec, key, *e);
            if (auto v = r.list(e->value)) assign(*v, r);
        }
    };
    auto word = [&](const std::string& sec, const std::string& key, auto&& assign) {
        if (const Entry* e = get(sec, key)) {
            auto r = reader(sec, key, *e);
            assign(e->value, r);
        }
    };

    // [model]
    auto& c = cfg.coeffs;
    bool have_tau = false, have_beta = false, have_mu = false;
    num("model", "lambda", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        c.lambda = v;
    });
    num("model", "gamma", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        c.gamma = v;
    });
    num("model", "x0", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        c.x0 = v;
    });
    for (const char* name : {"tau", "beta", "mu"}) {
        if (const Entry* e = get("model", name)) {
            Reader r = reader("model", name, *e);
            if (auto s = r.shape(e->value)) {
                if (std::string(name) == "tau") c.tau = *s, have_tau = true;
                else if (std::string(name) == "beta") c.beta = *s, have_beta = true;
                else c.mu = *s, have_mu = true;
            }
        }
    }
    if (!get("model", "lambda")) issues.push_back({0, "lambda", "required"});
    if (!get("model", "gamma")) issues.push_back({0, "gamma", "required"});
    if (!get("model", "tau")) issues.push_back({0, "tau", "required"});
    if (!get("model", "beta")) issues.push_back({0, "beta", "required"});
    if (!get("model", "mu")) issues.push_back({0, "mu", "required"});

    // [grid]
    num("grid", "n", [&](double v, Reader& r) {
        if (std::floor(v) != v || v < 3 || v > 20000) r.fail("must be an integer in [3, 20000]");
        else cfg.grid.n = static_cast<std::size_t>(v);
    });
    num("grid", "xmax", [&](double v, Reader&) { cfg.grid.xmax = v; });
    word("grid", "spacing", [&](const std::string& v, Reader& r) {
        if (v == "uniform") cfg.grid.spacing = Spacing::Uniform;
        else if (v == "geometric") cfg.grid.spacing = Spacing::Geometric;
        else r.fail("must be uniform or geometric");
    });
    num("grid", "ratio", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        cfg.grid.ratio = v;
    });
    if (cfg.grid.xmax && !(*cfg.grid.xmax > c.x0))
        issues.push_back({get("grid", "xmax")->line, "grid.xmax", "must exceed x0"});
    if (!cfg.grid.xmax && have_beta && have_mu && !default_xmax(c))
        issues.push_back({0, "grid.xmax", "required unless beta = beta1 + beta0 x with beta0 > 0"});
    if (get("grid", "ratio") && cfg.grid.spacing != Spacing::Geometric)
        issues.push_back({get("grid", "ratio")->line, "grid.ratio", "only valid with spacing = geometric"});

    // [run]
    word("run", "experiment", [&](const std::string& v, Reader& r) {
        if (auto e = parse_experiment(v)) cfg.experiment = *e;
        else r.fail("must be one of eigen, steady, simulate, sweep, validate");
    });
    num("run", "seed", [&](double v, Reader& r) {
        if (v < 0 || std::floor(v) != v || v > 9.0e15) r.fail("must be a nonnegative integer");
        else cfg.seed = static_cast<std::uint64_t>(v);
    });
    num("run", "threads", [&](double v, Reader& r) {
        if (v < 1 || std::floor(v) != v || v > 1024) r.fail("must be an integer in [1, 1024]");
        else cfg.threads = static_cast<unsigned>(v);
    });

    // [eigen]
    list("eigen", "v", [&](const std::vector<double>& v, Reader& r) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] >= 0.0)) r.fail("values must be >= 0");
            if (i > 0 && !(v[i] > v[i - 1])) r.fail("values must be strictly increasing");
        }
        cfg.eigen.v = v;
    });
    num("eigen", "tolerance", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        cfg.eigen.tolerance = v;
    });
    num("eigen", "max_iterations", [&](double v, Reader& r) {
        if (v < 1 || std::floor(v) != v) r.fail("must be a positive integer");
        else cfg.eigen.max_iterations = static_cast<int>(v);
    });
    boolean("eigen", "adjoint", cfg.eigen.adjoint);
    boolean("eigen", "hypotheses", cfg.eigen.hypotheses);

    // [steady]
    num("steady", "v_max", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        cfg.steady.v_max = v;
    });
    num("steady", "tolerance", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        cfg.steady.tolerance = v;
    });

    // [simulate]
    auto& sim = cfg.simulate;
    num("simulate", "t_end", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        sim.t_end = v;
    });
    num("simulate", "sample_interval", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        sim.sample_interval = v;
    });
    num("simulate", "v0", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        sim.v0 = v;
    });
    word("simulate", "initial", [&](const std::string& v, Reader& r) {
        if (v == "zero") {
            sim.initial = InitialProfile::Zero;
            return;
        }
        for (auto [name, kind] : {std::pair{"rational", InitialProfile::Rational},
                                  std::pair{"eigen", InitialProfile::Eigen}}) {
            const std::string prefix = std::string(name) + "(";
            if (v.starts_with(prefix) && v.ends_with(")")) {
                auto x = r.number(v.substr(prefix.size(), v.size() - prefix.size() - 1));
                if (x && !(*x > 0.0)) r.fail("profile scale must be > 0");
                if (x) {
                    sim.initial = kind;
                    sim.initial_scale = *x;
                }
                return;
            }
        }
        r.fail("must be zero, rational(c) or eigen(c)");
    });
    num("simulate", "dose", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        sim.dose = v;
    });
    list("simulate", "snapshots", [&](const std::vector<double>& v, Reader& r) {
        for (double x : v)
            if (!(x >= 0.0)) r.fail("snapshot times must be >= 0");
        sim.snapshots = v;
    });
    num("simulate", "threshold", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        sim.threshold = v;
    });
    num("simulate", "threshold_ratio", [&](double v, Reader& r) {
        if (!(v > 1.0)) r.fail("must be > 1");
        sim.threshold_ratio = v;
    });
    word("simulate", "transport", [&](const std::string& v, Reader& r) {
        if (v == "first") sim.transport = TransportOrder::First;
        else if (v == "second") sim.transport = TransportOrder::SecondLimited;
        else r.fail("must be first or second");
    });
    num("simulate", "cfl", [&](double v, Reader& r) {
        if (!(v > 0.0 && v <= 1.0)) r.fail("must be in (0, 1]");
        sim.cfl = v;
    });
    word("simulate", "mode", [&](const std::string& v, Reader& r) {
        if (v == "trajectory") sim.mode = SimulateMode::Trajectory;
        else if (v == "stability") sim.mode = SimulateMode::Stability;
        else r.fail("must be trajectory or stability");
    });
    num("simulate", "epsilon", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        sim.epsilon = v;
    });
    if (sim.threshold && get("simulate", "threshold_ratio"))
        issues.push_back({get("simulate", "threshold")->line, "simulate.threshold",
                          "give either threshold or threshold_ratio, not both"});

    // [sweep]
    word("sweep", "axis", [&](const std::string& v, Reader& r) {
        if (v == "H") cfg.sweep.axis = SweepAxis::Amplitude;
        else if (v == "beta0") cfg.sweep.axis = SweepAxis::Beta0;
        else if (v == "alpha") cfg.sweep.axis = SweepAxis::Alpha;
        else if (v == "m") cfg.sweep.axis = SweepAxis::Center;
        else if (v == "dose") cfg.sweep.axis = SweepAxis::Dose;
        else r.fail("must be one of H, beta0, alpha, m, dose");
    });
    word("sweep", "mode", [&](const std::string& v, Reader& r) {
        if (v == "dynamics") cfg.sweep.mode = SweepMode::Dynamics;
        else if (v == "eigen") cfg.sweep.mode = SweepMode::Eigen;
        else if (v == "steady") cfg.sweep.mode = SweepMode::Steady;
        else r.fail("must be dynamics, eigen or steady");
    });
    list("sweep", "values", [&](const std::vector<double>& v, Reader& r) {
        if (v.empty()) r.fail("needs at least one value");
        cfg.sweep.values = v;
    });
    if (cfg.sweep.axis && have_tau) {
        const int line = get("sweep", "axis")->line;
        const bool bell = std::holds_alternative<Bell>(c.tau);
        const bool scaled = std::holds_alternative<ScaledBell>(c.tau);
        if (*cfg.sweep.axis == SweepAxis::Amplitude && !bell)
            issues.push_back({line, "sweep.axis", "H sweeps need a bell tau"});
        if (*cfg.sweep.axis == SweepAxis::Alpha && !scaled)
            issues.push_back({line, "sweep.axis", "alpha sweeps need a scaled_bell tau"});
        if (*cfg.sweep.axis == SweepAxis::Center && !bell && !scaled)
            issues.push_back({line, "sweep.axis", "m sweeps need a bell or scaled_bell tau"});
    }
    if (cfg.sweep.axis && have_beta && *cfg.sweep.axis == SweepAxis::Beta0 &&
        !std::holds_alternative<Affine>(c.beta))
        issues.push_back({get("sweep", "axis")->line, "sweep.axis", "beta0 sweeps need an affine beta"});

    // [validate]
    num("validate", "v", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        cfg.validate.v = v;
    });
    num("validate", "pairs", [&](double v, Reader& r) {
        if (v < 1 || std::floor(v) != v || v > 1e6) r.fail("must be a positive integer");
        else cfg.validate.pairs = static_cast<int>(v);
    });
    num("validate", "scale", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        cfg.validate.scale = v;
    });
    num("validate", "n0", [&](double v, Reader& r) {
        if (v < 1 || std::floor(v) != v || v > 1e6) r.fail("must be a positive integer");
        else cfg.validate.n0 = static_cast<int>(v);
    });
    num("validate", "t_end", [&](double v, Reader& r) {
        if (!(v > 0.0)) r.fail("must be > 0");
        cfg.validate.t_end = v;
    });
    num("validate", "dose", [&](double v, Reader& r) {
        if (!(v >= 0.0)) r.fail("must be >= 0");
        cfg.validate.dose = v;
    });

    // [output]
    word("output", "dir", [&](const std::string& v, Reader&) { cfg.output.dir = v; });
    boolean("output", "csv", cfg.output.csv);

    if (have_tau && have_beta && have_mu && issues.empty()) {
        // sign of the rate functions on the configured grid
        try {
            const SizeGrid g = cfg.make_grid();
            (void)eval_coefficients(c, g);
        } catch (const CoefficientError& e) {
            issues.push_back({get("model", e.function())->line, e.function(), e.what()});
        } catch (const DomainError& e) {
            issues.push_back({0, "grid", e.what()});
        }
    }

    if (!issues.empty()) {
        std::stable_sort(issues.begin(), issues.end(), [](const ConfigIssue& a, const ConfigIssue& b) {
            const int la = a.line == 0 ? 1 << 30 : a.line;
            const int lb = b.line == 0 ? 1 << 30 : b.line;
            return la < lb;
        });
        throw ConfigError(std::move(issues));
    }

    for (const auto& [sec, keys] : schema()) {
        for (const auto& key : keys) {
            if (const Entry* e = get(sec, key)) cfg.echo.emplace_back(sec + "." + key, e->value);
        }
    }
    return cfg;
}

}  // namespace prion
