#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "runner.hpp"

namespace {

using fav::cli::ExitCode;
using json = nlohmann::json;

int report_failure(const std::exception& e) {
    json diag;
    const int code = fav::cli::classify(e, diag);
    std::cerr << diag.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Construct and certify pattern-avoiding fractal sets on dyadic grids."};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<int> depth;
    std::optional<int> budget_bits;
    std::optional<std::string> output;
    auto* run = app.add_subcommand("run", "Run a configuration and write its artifacts");
    run->add_option("config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Seed; required for randomized modes");
    run->add_option("--threads", threads, "Worker threads; results do not depend on this")->check(CLI::PositiveNumber);
    run->add_option("--depth", depth, "Override the configured depth");
    run->add_option("--budget-bits", budget_bits, "Integer-width cap for denominators");
    run->add_option("--output,-o", output, "Output directory");

    std::string history_path;
    int replay_threads = 1;
    std::string replay_report;
    auto* rep = app.add_subcommand("replay", "Re-derive and re-verify a run from its history");
    rep->add_option("history", history_path, "history.json written by run")->required();
    rep->add_option("--threads", replay_threads, "Worker threads")->check(CLI::PositiveNumber);

    std::string export_kind = "dimension";
    double alpha = 0.25;
    std::int64_t m_max = 0;
    auto* exp = app.add_subcommand("export-csv", "Write a CSV derived from a run's grid levels to stdout");
    exp->add_option("history", history_path, "history.json written by run")->required();
    exp->add_option("--kind", export_kind, "dimension, decay or weights")
        ->check(CLI::IsMember({"dimension", "decay", "weights"}));
    exp->add_option("--alpha", alpha, "Decay weight exponent");
    exp->add_option("--m-max", m_max, "Largest frequency; 0 picks min(D, 4096)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ExitCode::kExitConfig;
    }

    try {
        if (*run) {
            fav::cli::Overrides o{seed, threads, depth, budget_bits, output};
            const fav::cli::RunConfig cfg = fav::cli::load_config(config_path, o);
            if (cfg.output.empty()) throw fav::cli::ConfigError("config: no output directory (--output or \"output\")");
            const fav::cli::Outcome out = fav::cli::execute(cfg);
            fav::cli::write_outcome(cfg.output, cfg, out);
            std::cout << json{{"mode", cfg.mode}, {"output", cfg.output}, {"passed", out.passed}, {"checks", out.checks}}.dump(2)
                      << '\n';
            return out.passed ? ExitCode::kExitPass : ExitCode::kExitChecksFailed;
        }
        if (*rep) {
            const fav::cli::ReplayResult r = fav::cli::replay(history_path, replay_threads);
            std::cout << r.report.dump(2) << '\n';
            return r.passed ? ExitCode::kExitPass : ExitCode::kExitChecksFailed;
        }
        if (*exp) {
            std::cout << fav::cli::export_csv(history_path, export_kind, alpha, m_max);
            return ExitCode::kExitPass;
        }
    } catch (const std::exception& e) {
        return report_failure(e);
    }
    return ExitCode::kExitConfig;
}
