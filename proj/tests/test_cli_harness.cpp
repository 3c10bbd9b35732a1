#include <catch2/catch.hpp>

#include <filesystem>
#include <map>
#include <string>

#include "prion/config.hpp"
#include "prion/harness.hpp"
#include "prion/io.hpp"
#include "prion/record.hpp"

using namespace prion;
using Catch::Matchers::Contains;
using Catch::Matchers::WithinRel;

namespace fs = std::filesystem;

namespace {

const char* kMinimalEigen = R"(
[run]
experiment = eigen

[model]
lambda = 2400
gamma = 4
x0 = 0
tau = constant(0.001)
beta = affine(0, 0.03)
mu = constant(0.05)
)";

const char* kSmallEigen = R"(
[run]
experiment = eigen

[model]
lambda = 2400
gamma = 4
x0 = 0
tau = bell(0.001, 0.01, 2, sigma2=0.1)
beta = affine(0, 0.03)
mu = constant(0.05)

[grid]
n = 120

[eigen]
v = 0, 50, 600
adjoint = true
)";

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("prion-test-" + name);
    fs::remove_all(dir);
    return dir;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir))
        out[entry.path().filename().string()] = io::read_file(entry.path());
    return out;
}

}  // namespace

TEST_CASE("doubles are written with seventeen significant digits", "[cli-harness]") {
    CHECK(io::format_double(0.1) == "0.10000000000000001");
    CHECK(io::format_double(-2.5) == "-2.5");
    CHECK(std::stod(io::format_double(1.0 / 3.0)) == 1.0 / 3.0);
    io::CsvTable t({"a", "b"});
    t.add_row({1.0, 0.25});
    CHECK(t.str() == "a,b\n1,0.25\n");
    CHECK_THROWS_AS(t.add_row({1.0}), Error);
}

TEST_CASE("minimal eigen configuration picks up the documented defaults", "[cli-harness]") {
    const auto cfg = parse_config(kMinimalEigen);
    REQUIRE(cfg.experiment == Experiment::Eigen);
    CHECK(cfg.grid.n == 800);
    CHECK_FALSE(cfg.grid.xmax.has_value());
    CHECK_THAT(cfg.xmax(), WithinRel(10.0 * 0.05 / 0.03, 1e-14));
    CHECK(cfg.eigen.tolerance == 1e-10);
    CHECK(cfg.eigen.max_iterations == 200);
    CHECK(cfg.threads == 1);
    CHECK(cfg.output.dir == "out");
    CHECK(cfg.coeffs.vbar() == 600.0);
}

TEST_CASE("a negative coefficient is reported once with its field and line", "[cli-harness]") {
    std::string text = kMinimalEigen;
    text.replace(text.find("gamma = 4"), 9, "gamma = -4");
    try {
        (void)parse_config(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.issues().size() == 1);
        CHECK(e.issues()[0].field == "gamma");
        CHECK(e.issues()[0].line == 7);
        CHECK_THAT(std::string(e.what()), Contains("gamma"));
    }
}

TEST_CASE("all configuration problems are collected in line order", "[cli-harness]") {
    const std::string text = std::string(kMinimalEigen) +
                             "\n[grid]\nn = 2\nspacing = uniform\nratio = 1.1\nbogus = 3\n\n[mystery]\nx = 1\n";
    try {
        (void)parse_config(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.issues().size() >= 4);
        for (std::size_t i = 1; i < e.issues().size(); ++i) CHECK(e.issues()[i - 1].line <= e.issues()[i].line);
        bool bogus = false, section = false;
        for (const auto& issue : e.issues()) {
            bogus = bogus || issue.field == "grid.bogus";
            section = section || issue.field == "mystery";
        }
        CHECK(bogus);
        CHECK(section);
    }
}

TEST_CASE("duplicate and missing model keys are rejected", "[cli-harness]") {
    CHECK_THROWS_AS(parse_config(std::string(kMinimalEigen) + "\n[model]\ngamma = 5\n"), ConfigError);
    std::string missing = kMinimalEigen;
    missing.erase(missing.find("tau = constant(0.001)"), 21);
    try {
        (void)parse_config(missing);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.issues().size() == 1);
        CHECK(e.issues()[0].field == "tau");
    }
}

TEST_CASE("shipped amplitude sweep parses to the three bell heights", "[cli-harness]") {
    const auto cfg = parse_config(io::read_file(fs::path(PRION_CONFIG_DIR) / "fig5.cfg"));
    REQUIRE(cfg.experiment == Experiment::Sweep);
    REQUIRE(cfg.sweep.axis == SweepAxis::Amplitude);
    REQUIRE(cfg.sweep.values.size() == 3);
    CHECK(cfg.sweep.values[0] == 0.001);
    CHECK(cfg.sweep.values[1] == 0.01);
    CHECK(cfg.sweep.values[2] == 0.1);
    const auto& bell = std::get<Bell>(cfg.coeffs.tau);
    CHECK(bell.center == 2.0);
    CHECK_THAT(bell.sigma * bell.sigma, WithinRel(0.1, 1e-15));
    CHECK(cfg.simulate.snapshots == std::vector<double>{96.0});
}

TEST_CASE("every shipped configuration parses", "[cli-harness]") {
    for (const auto& entry : fs::directory_iterator(PRION_CONFIG_DIR)) {
        if (entry.path().extension() != ".cfg") continue;
        INFO(entry.path().filename().string());
        CHECK_NOTHROW(parse_config(io::read_file(entry.path())));
    }
}

TEST_CASE("value lists accept ranges", "[cli-harness]") {
    std::string text = kMinimalEigen;
    text += "\n[eigen]\nv = logspace(0, 2, 1)\n";
    CHECK(parse_config(text).eigen.v == std::vector<double>{1.0, 10.0, 100.0});
    text = kMinimalEigen;
    text += "\n[eigen]\nv = linspace(0, 1, 5)\n";
    CHECK(parse_config(text).eigen.v == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
}

TEST_CASE("experiment records survive a JSON round trip", "[cli-harness]") {
    ExperimentRecord r;
    r.experiment = "eigen";
    r.status = "partial";
    r.config = {{"model.lambda", "2400"}, {"grid.n", "800"}};
    r.results["lambda"] = -0.0841640786499874;
    r.results["items"] = Json::array({Json{{"v", 600.0}, {"ok", true}}});
    r.results["missing"] = json_number(std::numeric_limits<double>::quiet_NaN());
    r.diagnostics["iterations"] = 7;
    r.errors = {"V=5: failed"};
    r.files = {"eigen-x-lambda.csv"};
    r.provenance.grid_hash = "00ff";
    r.provenance.seed = 18446744073709551615ULL;
    r.provenance.digest = "abc";
    const auto back = parse_record(dump_record(r));
    CHECK(back == r);
    CHECK(back.results["missing"].is_null());
    CHECK_THROWS_AS(parse_record("{\"experiment\": 3}"), Error);
    CHECK_THROWS_AS(parse_record("not json"), Error);
}

TEST_CASE("eigen run writes a summary and CSV files", "[cli-harness]") {
    const auto dir = fresh_dir("eigen");
    RunOptions opts;
    opts.out_dir = dir.string();
    const auto outcome = run(parse_config(kSmallEigen), Experiment::Eigen, opts);
    REQUIRE(outcome.exit_code == 0);
    REQUIRE(fs::exists(outcome.summary));
    const auto rec = parse_record(io::read_file(outcome.summary));
    CHECK(rec.status == "ok");
    CHECK(rec.errors.empty());
    CHECK(rec.results.at("lambda_decreasing").get<bool>());
    for (const auto& f : rec.files) CHECK(fs::exists(dir / f));
    CHECK(rec.files.size() >= 2);
}

TEST_CASE("identical runs produce byte-identical outputs at any thread count", "[cli-harness]") {
    const auto cfg = parse_config(kSmallEigen);
    const auto a = fresh_dir("det-a");
    const auto b = fresh_dir("det-b");
    RunOptions oa, ob;
    oa.out_dir = a.string();
    oa.threads = 1;
    ob.out_dir = b.string();
    ob.threads = 3;
    REQUIRE(run(cfg, Experiment::Eigen, oa).exit_code == 0);
    REQUIRE(run(cfg, Experiment::Eigen, ob).exit_code == 0);
    CHECK(read_tree(a) == read_tree(b));

    RunOptions seeded = oa;
    seeded.seed = 99;
    const auto other = run(cfg, Experiment::Eigen, seeded);
    CHECK(other.record.provenance.digest != parse_record(io::read_file(run(cfg, Experiment::Eigen, oa).summary)).provenance.digest);
}

TEST_CASE("a failing sweep item is isolated and marks the run partial", "[cli-harness]") {
    std::string text = kSmallEigen;
    text.replace(text.find("experiment = eigen"), 18, "experiment = sweep");
    text += "\n[sweep]\naxis = H\nmode = eigen\nvalues = 0.001, -0.01, 0.1\n";
    const auto dir = fresh_dir("partial");
    RunOptions opts;
    opts.out_dir = dir.string();
    const auto outcome = run(parse_config(text), Experiment::Sweep, opts);
    CHECK(outcome.exit_code == 2);
    const auto rec = parse_record(io::read_file(outcome.summary));
    CHECK(rec.status == "partial");
    REQUIRE(rec.errors.size() == 1);
    CHECK_THAT(rec.errors[0], Contains("tau"));
    const auto& items = rec.results.at("items");
    REQUIRE(items.size() == 3);
    CHECK(items[1].contains("error"));
    CHECK_FALSE(items[0].contains("error"));
    CHECK_FALSE(items[2].contains("error"));
}

TEST_CASE("mismatched experiment and misplaced flags produce an error summary", "[cli-harness]") {
    const auto dir = fresh_dir("mismatch");
    RunOptions opts;
    opts.out_dir = dir.string();
    const auto cfg = parse_config(kSmallEigen);
    const auto wrong = run(cfg, Experiment::Steady, opts);
    CHECK(wrong.exit_code == 1);
    REQUIRE(fs::exists(wrong.summary));
    const auto rec = parse_record(io::read_file(wrong.summary));
    CHECK(rec.status == "error");
    REQUIRE_FALSE(rec.errors.empty());
    CHECK_THAT(rec.errors[0], Contains("run.experiment"));

    opts.discrete = true;
    CHECK(run(cfg, Experiment::Eigen, opts).exit_code == 1);
}

TEST_CASE("configuration failures still leave a summary behind", "[cli-harness]") {
    const auto dir = fresh_dir("invalid");
    ConfigError err({{3, "gamma", "must be > 0"}});
    const auto outcome = config_failure(err, Experiment::Eigen, dir.string());
    CHECK(outcome.exit_code == 1);
    const auto rec = parse_record(io::read_file(outcome.summary));
    CHECK(rec.status == "error");
    REQUIRE(rec.errors.size() == 1);
    CHECK(rec.errors[0] == "line 3: gamma: must be > 0");
}

TEST_CASE("validation checks pass on a small grid", "[cli-harness]") {
    const auto cfg = parse_config(io::read_file(fs::path(PRION_CONFIG_DIR) / "validate.cfg"));
    const auto dir = fresh_dir("validate");
    RunOptions opts;
    opts.out_dir = dir.string();
    opts.dump_operator = true;
    const auto outcome = run(cfg, Experiment::Validate, opts);
    CHECK(outcome.exit_code == 0);
    const auto rec = parse_record(io::read_file(outcome.summary));
    for (const auto& check : rec.results.at("checks")) {
        INFO(check.dump());
        CHECK(check.at("status").get<std::string>() != "fail");
    }
    bool dumped = false;
    for (const auto& f : rec.files) dumped = dumped || f.find("operator") != std::string::npos;
    CHECK(dumped);
}
