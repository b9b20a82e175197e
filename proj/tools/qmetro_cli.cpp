// qmetro: task QFI runs, sweeps and strategy validation from a JSON config.
//   exit 0 ok, 2 solver failure, 3 config error

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "qmetro/experiment.hpp"

using namespace qmetro;

namespace {

void emit(const std::string& body, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << body;
        return;
    }
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << body;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task QFI of N-step processes under parallel, sequential, switch, superposition and ICO strategies"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    std::string out;
    int jobs = 1;
    double tol_gap = -1;
    app.add_option("--out", out, "output path (default: stdout or outputs.result)");
    app.add_option("--jobs", jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
    app.add_option("--tol-gap", tol_gap, "largest accepted relative oracle gap")->check(CLI::PositiveNumber);
    std::string composition;
    app.add_option("--composition", composition, "override process.composition of channel processes")
        ->check(CLI::IsMember({"signal_after_noise", "noise_after_signal"}));

    std::string config, strategy;
    auto* run = app.add_subcommand("run", "task QFI, synthesis and oracle check for each configured set");
    run->add_option("config", config, "config JSON")->required();
    auto* sweep = app.add_subcommand("sweep", "CSV over the configured grid");
    sweep->add_option("config", config, "config JSON")->required();
    auto* validate = app.add_subcommand("validate", "check a stored strategy against a process");
    validate->add_option("strategy", strategy, "strategy JSON")->required();
    validate->add_option("config", config, "config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    try {
        ExperimentConfig cfg = load_config(config);
        if (!composition.empty()) {
            if (cfg.process.value("kind", "") != "channel")
                throw ConfigError("--composition applies to channel processes only");
            nlohmann::json doc = cfg.raw;
            doc["process"]["composition"] = composition;
            cfg = parse_config(doc);
        }
        if (tol_gap > 0) cfg.oracle_gap_tol = tol_gap;
        const std::string target = out.empty() ? cfg.result_path : out;
        if (*run) {
            auto res = run_task(cfg);
            emit(dump12(outcome_json(cfg, res)) + "\n", target);
            for (const auto& s : res.sets)
                if (!s.ok) std::cerr << "qmetro: " << s.set << ": " << s.error << "\n";
            return res.failed() ? 2 : 0;
        }
        if (*sweep) {
            auto res = run_sweep(cfg, jobs);
            emit(res.csv, target);
            if (res.failed_rows > 0) {
                std::cerr << "qmetro: " << res.failed_rows << " grid point(s) failed\n";
                return 2;
            }
            return 0;
        }
        if (*validate) {
            StrategyChoi s;
            {
                std::ifstream f(strategy);
                if (!f) throw ConfigError("cannot open strategy " + strategy);
                try {
                    s = read_strategy_json(f);
                } catch (const std::exception& e) {
                    throw ConfigError(std::string("bad strategy file: ") + e.what());
                }
            }
            auto v = validate_strategy(s, cfg);
            emit(dump12(validation_json(v)) + "\n", target);
            return v.pass ? 0 : 2;
        }
    } catch (const ConfigError& e) {
        std::cerr << "qmetro: config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "qmetro: " << e.what() << "\n";
        return 2;
    }
    return 3;
}
