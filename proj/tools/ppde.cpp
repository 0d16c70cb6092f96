// Command-line front end: runs scenario pipelines and replays reports.
//
//   ppde <simulate|solve|verify|stop|control|all> --config <file> --out <dir>
//        [--seed N] [--workers N]
//   ppde replay <report-dir> [--workers N]
//
// Exit codes: 0 all checks pass, 2 schema error, 3 numerical failure,
// 4 check failure or replay mismatch (report still written).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ppde/runner.hpp"

namespace {

int run_stage(const std::string& subcommand, const std::string& config_path,
              const std::string& out_dir, std::optional<std::uint64_t> seed, int workers) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "cannot open config file: " << config_path << "\n";
        return 2;
    }
    ppde::json scenario;
    try {
        in >> scenario;
    } catch (const std::exception& e) {
        std::cerr << "config is not valid JSON: " << e.what() << "\n";
        return 2;
    }

    const auto report = ppde::run_scenario(scenario, subcommand, out_dir, seed, workers);
    for (const auto& c : report.checks)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  value=" << c.value
                  << (c.exact ? " (exact)" : "") << (c.note.empty() ? "" : "  [" + c.note + "]")
                  << "\n";
    std::cout << "report: " << (std::filesystem::path(out_dir) / "report.json").string() << "\n";
    return report.all_pass ? 0 : 4;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"path-dependent PDE laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string report_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;

    const std::vector<std::string> stage_names = {"simulate", "solve", "verify",
                                                  "stop",     "control", "all"};
    std::vector<CLI::App*> stage_cmds;
    for (const auto& name : stage_names) {
        auto* cmd = app.add_subcommand(name, "run the " + name + " stage");
        cmd->add_option("--config", config_path, "scenario JSON")->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "override the scenario seed")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--workers", workers, "worker cap (also env WORKERS)");
        stage_cmds.push_back(cmd);
    }
    auto* replay_cmd = app.add_subcommand("replay", "re-run a report and compare bit-exactly");
    replay_cmd->add_option("dir", report_dir, "report directory")->required();
    replay_cmd->add_option("--workers", workers, "worker cap (also env WORKERS)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (replay_cmd->parsed()) {
            const auto verdict = ppde::replay(report_dir, workers);
            if (!verdict.ok) {
                std::cerr << "replay mismatch: " << verdict.first_divergence << "\n";
                return 4;
            }
            std::cout << "replay: bit-identical\n";
            return 0;
        }
        for (std::size_t i = 0; i < stage_cmds.size(); ++i)
            if (stage_cmds[i]->parsed())
                return run_stage(stage_names[i], config_path, out_dir,
                                 seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                                 workers);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ppde::SchemaError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ppde::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
