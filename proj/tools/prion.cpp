#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "prion/config.hpp"
#include "prion/harness.hpp"
#include "prion/io.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::string> out;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    bool dump_operator = false;
    bool discrete = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "output directory (overrides [output] dir)");
    cmd->add_option("--threads", f.threads, "worker threads (overrides [run] threads)")->check(CLI::Range(1u, 1024u));
    cmd->add_option("--seed", f.seed, "random seed (overrides [run] seed)");
}

int execute(prion::Experiment experiment, const Flags& f) {
    const auto start = std::chrono::steady_clock::now();
    prion::RunOutcome outcome;
    try {
        const auto cfg = prion::parse_config(prion::io::read_file(f.config));
        prion::RunOptions opts;
        opts.out_dir = f.out;
        opts.threads = f.threads;
        opts.seed = f.seed;
        opts.dump_operator = f.dump_operator;
        opts.discrete = f.discrete;
        outcome = prion::run(cfg, experiment, opts);
    } catch (const prion::ConfigError& e) {
        std::cerr << e.what() << "\n";
        try {
            outcome = prion::config_failure(e, experiment, f.out.value_or("out"));
        } catch (const std::exception& w) {
            std::cerr << "cannot write summary: " << w.what() << "\n";
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& err : outcome.record.errors) std::cerr << "error: " << err << "\n";
    std::cerr << prion::to_string(experiment) << ": " << outcome.record.status << " in " << seconds << " s\n";
    std::cout << outcome.summary.string() << "\n";
    for (const auto& file : outcome.record.files) std::cout << (outcome.summary.parent_path() / file).string() << "\n";
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prion aggregation model: eigenvalues, steady states, dynamics and sweeps"};
    app.require_subcommand(1);
    Flags flags;
    struct Sub {
        const char* name;
        const char* help;
        prion::Experiment experiment;
    };
    const Sub subs[] = {
        {"eigen", "principal eigenvalue Lambda(V) and eigenvector U(V; x)", prion::Experiment::Eigen},
        {"steady", "non-zero steady state, profile and bimodality", prion::Experiment::Steady},
        {"simulate", "time integration of the full system", prion::Experiment::Simulate},
        {"sweep", "parameter sweep of simulations, eigenvalues or steady states", prion::Experiment::Sweep},
        {"validate", "numerical checks of the discretization", prion::Experiment::Validate},
    };
    std::optional<prion::Experiment> chosen;
    for (const auto& s : subs) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, flags);
        if (s.experiment == prion::Experiment::Validate) {
            cmd->add_flag("--dump-operator", flags.dump_operator, "write the dense operator as CSV");
            cmd->add_flag("--discrete", flags.discrete, "compare with the calibrated discrete model");
        }
        cmd->callback([&chosen, e = s.experiment] { chosen = e; });
    }
    CLI11_PARSE(app, argc, argv);
    return execute(*chosen, flags);
}
