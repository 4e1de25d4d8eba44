// robustsim: worst-case bounds on simulation outputs by Frank-Wolfe stochastic approximation.

#include "robustsim/robustsim.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace robustsim;

namespace {

template <class F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    } catch (const InfeasibleError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return exit_solver;
    } catch (const ConvergenceError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return exit_solver;
    } catch (const std::domain_error& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return exit_solver;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_solver;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robustsim: worst-case bounds on simulation performance measures"};
    app.set_version_flag("--version", std::string(io::kToolVersion));
    app.require_subcommand(1);

    std::string config_path, out_dir, sense;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    auto* run = app.add_subcommand("run", "run the min and/or max FWSA problems of a config");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* run_seed = run->add_option("--seed", seed, "override the master seed");
    auto* run_out = run->add_option("--out", out_dir, "output directory");
    auto* run_sense = run->add_option("--sense", sense, "min, max or both")->check(CLI::IsMember({"min", "max", "both"}));
    auto* run_threads = run->add_option("--threads", threads, "replication threads (outputs do not depend on it)")->check(CLI::Range(1u, 256u));

    auto* oracle = app.add_subcommand("oracle", "deterministic Frank-Wolfe on the steady-state objective");
    oracle->add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* oracle_out = oracle->add_option("--out", out_dir, "output directory");

    std::size_t n = 3, trials = 100;
    std::uint64_t check_seed = 1;
    std::string check_out = ".";
    auto* check = app.add_subcommand("subproblem-check", "compare subproblem solvers with brute force");
    check->add_option("--n", n, "support size (2..6)")->required();
    check->add_option("--trials", trials, "number of random instances")->required();
    check->add_option("--seed", check_seed, "seed")->required();
    check->add_option("--out", check_out, "output directory");

    std::string preset_name;
    bool dump_only = false;
    auto* preset = app.add_subcommand("preset", "run a built-in experiment");
    preset->add_option("name", preset_name, "preset name (use 'list' to print all)")->required();
    auto* preset_out = preset->add_option("--out", out_dir, "output directory");
    preset->add_flag("--dump", dump_only, "write config.json only");

    CLI11_PARSE(app, argc, argv);

    if (*run) {
        return guarded([&] {
            RunOptions opt;
            if (*run_seed) opt.seed = seed;
            if (*run_out) opt.out = out_dir;
            if (*run_sense) opt.sense = sense;
            if (*run_threads) opt.threads = threads;
            return run_experiment(load_config(config_path), opt, std::cout);
        });
    }
    if (*oracle) {
        return guarded([&] {
            RunOptions opt;
            if (*oracle_out) opt.out = out_dir;
            return run_oracle_command(load_config(config_path), opt, std::cout);
        });
    }
    if (*check) {
        return guarded([&] {
            const auto rep = check::subproblem_check(n, trials, RandomStream(check_seed));
            io::write_json(fs::path(check_out) / "check.json", check::check_json(rep, n, trials, check_seed));
            for (const auto& k : rep.kinds)
                std::cout << k.name << ": max discrepancy " << io::format_double(k.max_discrepancy) << " (tolerance "
                          << io::format_double(k.tolerance) << ") " << (k.passed() ? "ok" : "FAILED") << "\n";
            return rep.passed() ? exit_ok : exit_check_failed;
        });
    }
    if (*preset) {
        if (preset_name == "list") {
            for (const auto& p : presets::names()) std::cout << p << "\n";
            return exit_ok;
        }
        const auto cfg = presets::get(preset_name);
        if (!cfg) {
            std::cerr << "unknown preset '" << preset_name << "' (try 'preset list')\n";
            return exit_config;
        }
        return guarded([&] {
            const fs::path out = *preset_out ? fs::path(out_dir) : fs::path((*cfg)["output_dir"].get<std::string>());
            io::write_json(out / "config.json", *cfg);
            if (dump_only) return int(exit_ok);
            RunOptions opt;
            opt.out = out.string();
            return run_experiment(parse_config(cfg->dump(2)), opt, std::cout);
        });
    }
    return exit_ok;
}
