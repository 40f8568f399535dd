// batchal: command-line entry point.
//
//   batchal run --config <path> [--out <dir>] [--seed <n>]
//   batchal oracle eval --name <oracle> --point v1,v2,...
//   batchal selftest

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "batchal/harness.hpp"
#include "batchal/oracles.hpp"
#include "batchal/selftest.hpp"

namespace {

constexpr int kUsageExit = 2;

int cmd_run(const std::string& config_path, const std::string& out, const std::uint64_t* seed) {
    auto cfg = batchal::harness::parse_config(config_path);
    if (!out.empty()) cfg.out_dir = out;
    if (seed) cfg.al.base_seed = *seed;
    const auto res = batchal::harness::run_experiment(cfg);
    for (const auto& [label, rows] : res.summary) {
        const auto& last = rows.back();
        std::printf("%-20s n_labeled=%zu mean_accuracy=%.4f std=%.4f\n", label.c_str(), last.n_labeled,
                    last.mean_accuracy, last.std_accuracy);
    }
    std::printf("wrote %s\n", (cfg.out_dir / "trace.csv").string().c_str());
    return 0;
}

int cmd_oracle_eval(const std::string& name, const std::vector<double>& point) {
    const auto oracle = batchal::oracles::make_oracle(name);
    std::printf("%.10g\n", oracle(point));
    return 0;
}

int cmd_selftest() {
    bool ok = true;
    for (const auto& r : batchal::selftest::run_all()) {
        std::printf("[%s] %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch-mode student/teacher active learning for regression surrogates"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    run->add_option("--config", config_path, "Experiment config file")->required();
    run->add_option("--out", out_dir, "Output directory (overrides out_dir)");
    auto* seed_opt = run->add_option("--seed", seed, "Base seed (overrides the config seed)");

    auto* oracle = app.add_subcommand("oracle", "Query a labeling oracle");
    oracle->require_subcommand(1);
    auto* eval = oracle->add_subcommand("eval", "Evaluate an oracle at one design point (SI units)");
    std::string oracle_name;
    std::vector<double> point;
    eval->add_option("--name", oracle_name, "vessel_max_stress | myring_volume")->required();
    eval->add_option("--point", point, "Comma-separated coordinates")->required()->delimiter(',');

    auto* selftest = app.add_subcommand("selftest", "Run gradient-check and brute-force property suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kUsageExit;
    }

    try {
        if (*run) return cmd_run(config_path, out_dir, *seed_opt ? &seed : nullptr);
        if (*eval) return cmd_oracle_eval(oracle_name, point);
        if (*selftest) return cmd_selftest();
    } catch (const batchal::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageExit;
    } catch (const batchal::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kUsageExit;
}
