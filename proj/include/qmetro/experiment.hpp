#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qmetro/qfi_oracle.hpp"
#include "qmetro/strategy_synthesis.hpp"
#include "qmetro/task_qfi.hpp"

namespace qmetro {

// Bad or inconsistent configuration (exit code 3 in the CLI).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SweepSpec {
    std::string parameter;  // dotted path into the config, e.g. "process.noise.p" or "phi"
    std::vector<double> grid;
};

// One JSON document, "schema_version": 1.
//
//   process  {"kind": "channel", "signal": {"kind": "rz"}, "noise": {"kind": "amplitude_damping", "p": 0.4},
//             "composition": "signal_after_noise"}
//            {"kind": "nonidentical_pair", "p1": .., "p2": ..}                    N = 2
//            {"kind": "nonmarkovian", "g": .., "t": .. | "segment": .., "markovian": false}   N = 2
//   N, phi, sets ("par", "seq", "swi", "sup", "ico", "control_free")
//   sweep    {"parameter": "process.noise.p", "grid": [..] | {"start", "stop", "points"}}
//   tolerances {"gap", "feas", "oracle_gap"}, synthesize, verify, outputs {"strategies", "result"}, seed
struct ExperimentConfig {
    nlohmann::json raw;  // the document as read, sweeps substitute into a copy
    nlohmann::json process;
    int N = 2;
    double phi = 0;
    std::vector<std::string> sets;
    std::optional<SweepSpec> sweep;
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    double oracle_gap_tol = 1e-4;
    bool synthesize = true;
    bool verify = true;
    std::string strategy_dir;  // empty: no strategy export
    std::string result_path;   // empty: stdout
    unsigned long seed = 0;
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Copy of the config with the value at a dotted path replaced, re-validated.
ExperimentConfig with_parameter(const ExperimentConfig& cfg, const std::string& path, double value);

// Comb as a function of the parameter for the configured process and N.
CombFamily make_family(const nlohmann::json& process, int N);

struct SetOutcome {
    std::string set;
    bool ok = false;
    std::string error;
    double lambda = 0;
    QfiResult qfi;
    bool synthesized = false;
    StrategyChoi strategy;
    double saddle = 0;
    double membership = 0;
    bool verified = false;
    VerificationReport report;
    double seconds = 0;
};

struct TaskOutcome {
    std::vector<SetOutcome> sets;
    bool failed() const;
};

TaskOutcome run_task(const ExperimentConfig& cfg);
nlohmann::json outcome_json(const ExperimentConfig& cfg, const TaskOutcome& out);

// Grid points in parallel, rows in grid order. Columns: grid_value, one per set, then
// oracle_gap_<set> for the sets that get synthesized, then status.
struct SweepOutcome {
    std::string csv;
    int failed_rows = 0;
};
SweepOutcome run_sweep(const ExperimentConfig& cfg, int jobs = 1);

struct ValidationOutcome {
    double lambda = 0;
    VerificationReport report;
    double membership = 0;
    bool pass = false;
};
ValidationOutcome validate_strategy(const StrategyChoi& s, const ExperimentConfig& cfg);
nlohmann::json validation_json(const ValidationOutcome& v);

// %.12g
std::string format12(double x);
// JSON text with every floating point number at 12 significant digits
std::string dump12(const nlohmann::json& j, int indent = 2);

}  // namespace qmetro
