#include "qmetro/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "qmetro/metrology_zoo.hpp"

namespace qmetro {

using json = nlohmann::json;

namespace {

const char* const kSetNames[] = {"par", "seq", "swi", "sup", "ico", "control_free"};

double round12(double x) { return std::isfinite(x) ? std::stod(format12(x)) : x; }

// relative oracle gap within tol, or an absolute miss inside the solver's own accuracy
// (lambda near zero is only known to about gap_tol)
bool oracle_accepts(const VerificationReport& r, double tol, double gap_tol) {
    const double miss = std::abs(r.j_sld - r.lambda);
    return r.rel_gap <= tol || miss <= gap_tol * std::max(1.0, std::abs(r.lambda));
}

bool number_char(char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.' || c == 'e' || c == 'E';
}

double number(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
    if (!j[key].is_number()) throw ConfigError(where + ": \"" + key + "\" must be a number");
    return j[key].get<double>();
}

double probability(const json& j, const std::string& key, const std::string& where) {
    const double p = number(j, key, where);
    if (!(p >= 0 && p <= 1)) throw ConfigError(where + ": \"" + key + "\" must lie in [0, 1]");
    return p;
}

std::string text(const json& j, const std::string& key, const std::string& where, const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_string()) throw ConfigError(where + ": \"" + key + "\" must be a string");
    return j[key].get<std::string>();
}

bool flag(const json& j, const std::string& key, bool dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_boolean()) throw ConfigError("\"" + key + "\" must be true or false");
    return j[key].get<bool>();
}

KrausChannel noise_channel(const json& n) {
    const std::string kind = text(n, "kind", "noise", "");
    if (kind == "none" || kind == "identity") return identity_channel(2);
    if (kind == "amplitude_damping") return amplitude_damping(probability(n, "p", "noise"));
    if (kind == "bit_flip") return bit_flip(probability(n, "p", "noise"));
    if (kind == "phase_flip") return phase_flip(probability(n, "p", "noise"));
    if (kind == "nmr") {
        const double T1 = number(n, "T1", "noise"), T2 = number(n, "T2", "noise");
        if (!(T1 > 0 && T2 > 0 && T2 <= 2 * T1)) throw ConfigError("noise: need T1 > 0 and 0 < T2 <= 2 T1");
        return nmr_relaxation(number(n, "t", "noise"), T1, T2, probability(n, "a0", "noise"));
    }
    throw ConfigError("noise: unknown kind \"" + kind + "\"");
}

// signal channel at phi
std::function<KrausChannel(double)> signal_channel(const json& s) {
    const std::string kind = text(s, "kind", "signal", "");
    if (kind == "rz") return [](double phi) { return rz(phi); };
    if (kind == "rx") return [](double phi) { return rx(phi); };
    if (kind == "uz") {
        const double t = number(s, "t", "signal");
        return [t](double omega) { return uz(omega, t); };
    }
    throw ConfigError("signal: unknown kind \"" + kind + "\"");
}

std::vector<int> comb_dims(const FactorizedComb& fc) {
    std::vector<int> d;
    for (const auto& f : fc.layout.factors()) d.push_back(f.dim);
    return d;
}

std::vector<double> parse_grid(const json& g) {
    std::vector<double> out;
    if (g.is_array()) {
        for (const auto& v : g) {
            if (!v.is_number()) throw ConfigError("sweep: grid entries must be numbers");
            out.push_back(v.get<double>());
        }
    } else if (g.is_object()) {
        const double a = number(g, "start", "sweep.grid"), b = number(g, "stop", "sweep.grid");
        if (!g.contains("points") || !g["points"].is_number_integer())
            throw ConfigError("sweep.grid: \"points\" must be an integer");
        const long n = g["points"].get<long>();
        if (n < 0) throw ConfigError("sweep.grid: \"points\" must be non-negative");
        for (long k = 0; k < n; ++k) out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(k) / (n - 1));
    } else {
        throw ConfigError("sweep: \"grid\" must be an array or {start, stop, points}");
    }
    if (out.empty()) throw ConfigError("sweep: grid is empty");
    return out;
}

void write_strategy_file(const std::string& dir, const SetOutcome& o) {
    std::filesystem::create_directories(dir);
    std::vector<IsometrySequence> iso;
    const StrategyChoi& s = o.strategy;
    if (s.spec.kind == SetKind::Seq && s.purified) {
        const CVec& v = s.purification;
        LabeledMatrix pp(s.purification_layout, v * v.adjoint());
        iso.push_back(comb_to_isometries(pp, strategy_teeth(s.spec.perms.at(0))));
    }
    std::ofstream f(std::filesystem::path(dir) / ("strategy_" + o.set + ".json"));
    if (!f) throw ConfigError("cannot write strategy file in " + dir);
    write_strategy_json(s, f, iso);
}

}  // namespace

std::string format12(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string dump12(const json& j, int indent) {
    // nlohmann writes the shortest round trip form, which can still run to 17 digits
    const std::string raw = j.dump(indent);
    std::string out;
    out.reserve(raw.size());
    bool in_string = false;
    for (size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            out += c;
            if (c == '\\' && i + 1 < raw.size()) out += raw[++i];
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            continue;
        }
        if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
            size_t k = i;
            while (k < raw.size() && number_char(raw[k])) ++k;
            const std::string tok = raw.substr(i, k - i);
            out += tok.find_first_of(".eE") == std::string::npos ? tok : format12(std::stod(tok));
            i = k - 1;
            continue;
        }
        out += c;
    }
    return out;
}

CombFamily make_family(const json& process, int N) {
    if (!process.is_object()) throw ConfigError("\"process\" must be an object");
    const std::string kind = text(process, "kind", "process", "");
    if (kind == "channel") {
        if (!process.contains("signal")) throw ConfigError("process: missing \"signal\"");
        auto sig = signal_channel(process["signal"]);
        KrausChannel noise = process.contains("noise") ? noise_channel(process["noise"]) : identity_channel(2);
        const std::string comp = text(process, "composition", "process", "signal_after_noise");
        CompositionOrder order;
        if (comp == "signal_after_noise") order = CompositionOrder::SignalAfterNoise;
        else if (comp == "noise_after_signal") order = CompositionOrder::NoiseAfterSignal;
        else throw ConfigError("process: composition must be signal_after_noise or noise_after_signal");
        return [sig, noise, order, N](double phi) { return product_comb(compose(sig(phi), noise, order), N); };
    }
    if (kind == "nonidentical_pair") {
        if (N != 2) throw ConfigError("nonidentical_pair is a two-step process, N must be 2");
        const double p1 = probability(process, "p1", "process"), p2 = probability(process, "p2", "process");
        return [p1, p2](double phi) { return nonidentical_pair(p1, p2, phi); };
    }
    if (kind == "nonmarkovian") {
        if (N != 2) throw ConfigError("nonmarkovian is a two-step process, N must be 2");
        const double g = number(process, "g", "process");
        // total time t, each step runs for t/2; "segment" gives the per-step duration instead
        double t;
        if (process.contains("segment")) {
            if (process.contains("t")) throw ConfigError("process: give either \"t\" or \"segment\", not both");
            t = 2 * number(process, "segment", "process");
        } else {
            t = number(process, "t", "process");
        }
        const bool markovian = flag(process, "markovian", false);
        return [g, t, markovian](double phi) { return nonmarkovian_swap_comb(phi, g, t, markovian); };
    }
    throw ConfigError("process: unknown kind \"" + kind + "\"");
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (!doc.contains("schema_version")) throw ConfigError("missing \"schema_version\"");
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != 1)
        throw ConfigError("unsupported schema_version, expected 1");
    ExperimentConfig c;
    c.raw = doc;
    if (!doc.contains("process")) throw ConfigError("missing \"process\"");
    c.process = doc["process"];
    if (!doc.contains("N") || !doc["N"].is_number_integer()) throw ConfigError("\"N\" must be an integer");
    c.N = doc["N"].get<int>();
    if (c.N < 1 || c.N > 4) throw ConfigError("N must be between 1 and 4");
    c.phi = doc.contains("phi") ? number(doc, "phi", "config") : 0.0;
    if (!doc.contains("sets") || !doc["sets"].is_array() || doc["sets"].empty())
        throw ConfigError("\"sets\" must be a non-empty array");
    std::set<std::string> seen;
    for (const auto& s : doc["sets"]) {
        if (!s.is_string()) throw ConfigError("set names must be strings");
        std::string name = s.get<std::string>();
        if (name == "switch") name = "swi";
        if (std::find(std::begin(kSetNames), std::end(kSetNames), name) == std::end(kSetNames))
            throw ConfigError("unknown strategy set \"" + name + "\"");
        if (!seen.insert(name).second) throw ConfigError("strategy set \"" + name + "\" listed twice");
        if ((name == "sup" || name == "ico") && c.N > 3) throw ConfigError(name + " is limited to N <= 3");
        if (name == "control_free" && c.N != 2) throw ConfigError("control_free needs N = 2");
        c.sets.push_back(name);
    }
    if (doc.contains("sweep")) {
        const json& sw = doc["sweep"];
        if (!sw.is_object()) throw ConfigError("\"sweep\" must be an object");
        SweepSpec s;
        s.parameter = text(sw, "parameter", "sweep", "");
        if (s.parameter.empty()) throw ConfigError("sweep: missing \"parameter\"");
        if (!sw.contains("grid")) throw ConfigError("sweep: missing \"grid\"");
        s.grid = parse_grid(sw["grid"]);
        c.sweep = s;
    }
    if (doc.contains("tolerances")) {
        const json& t = doc["tolerances"];
        if (!t.is_object()) throw ConfigError("\"tolerances\" must be an object");
        if (t.contains("gap")) c.gap_tol = number(t, "gap", "tolerances");
        if (t.contains("feas")) c.feas_tol = number(t, "feas", "tolerances");
        if (t.contains("oracle_gap")) c.oracle_gap_tol = number(t, "oracle_gap", "tolerances");
        if (!(c.gap_tol > 0 && c.feas_tol > 0 && c.oracle_gap_tol > 0))
            throw ConfigError("tolerances must be positive");
    }
    c.synthesize = flag(doc, "synthesize", true);
    c.verify = flag(doc, "verify", c.synthesize);
    if (c.verify && !c.synthesize) throw ConfigError("verify needs synthesize");
    if (doc.contains("outputs")) {
        const json& o = doc["outputs"];
        if (!o.is_object()) throw ConfigError("\"outputs\" must be an object");
        c.strategy_dir = text(o, "strategies", "outputs", "");
        c.result_path = text(o, "result", "outputs", "");
    }
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) throw ConfigError("\"seed\" must be a non-negative integer");
        c.seed = doc["seed"].get<unsigned long>();
    }
    // build the comb once so parameter errors surface here
    try {
        make_family(c.process, c.N)(c.phi);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("process: ") + e.what());
    }
    return c;
}

ExperimentConfig parse_config_text(const std::string& s) {
    json doc;
    try {
        doc = json::parse(s);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

ExperimentConfig with_parameter(const ExperimentConfig& cfg, const std::string& path, double value) {
    json doc = cfg.raw;
    json* node = &doc;
    std::stringstream ss(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(ss, key, '.')) keys.push_back(key);
    if (keys.empty()) throw ConfigError("sweep: empty parameter path");
    for (size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->is_object() || !node->contains(keys[i]))
            throw ConfigError("sweep: parameter path \"" + path + "\" does not exist");
        node = &(*node)[keys[i]];
    }
    if (!node->is_object()) throw ConfigError("sweep: parameter path \"" + path + "\" does not exist");
    if (node->contains(keys.back()) && !(*node)[keys.back()].is_number())
        throw ConfigError("sweep: parameter \"" + path + "\" is not numeric");
    (*node)[keys.back()] = value;
    return parse_config(doc);
}

bool TaskOutcome::failed() const {
    for (const auto& s : sets)
        if (!s.ok) return true;
    return false;
}

TaskOutcome run_task(const ExperimentConfig& cfg) {
    CombFamily family = make_family(cfg.process, cfg.N);
    QfiOptions qopt;
    qopt.sdp.gap_tol = cfg.gap_tol;
    qopt.sdp.feas_tol = cfg.feas_tol;
    TaskOutcome out;
    for (const auto& name : cfg.sets) {
        SetOutcome o;
        o.set = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            FactorizedComb fc = family(cfg.phi);
            if (name == "control_free") {
                o.qfi = control_free(fc, qopt);
            } else {
                auto spec = StrategySetSpec::make(set_kind_from_string(name), comb_dims(fc));
                o.qfi = task_qfi(fc, spec, qopt);
            }
            o.lambda = o.qfi.value;
            if (!o.qfi.ok()) {
                o.error = "solver ended with status " + to_string(o.qfi.status);
            } else if (cfg.synthesize && name != "control_free") {
                o.strategy = optimal_strategy(fc, o.qfi.spec, o.qfi);
                o.synthesized = true;
                o.saddle = saddle_residual(o.strategy.marginal.mat(), fc, o.strategy.gauge);
                o.membership = membership_residual(o.strategy);
                if (cfg.verify) {
                    o.report = verify_strategy(o.strategy, family, cfg.phi, o.lambda);
                    o.verified = true;
                    if (!oracle_accepts(o.report, cfg.oracle_gap_tol, cfg.gap_tol))
                        o.error = "oracle gap " + format12(o.report.rel_gap) + " above " + format12(cfg.oracle_gap_tol);
                }
            }
            o.ok = o.error.empty();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            o.ok = false;
            o.error = e.what();
        }
        o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.synthesized && !cfg.strategy_dir.empty()) write_strategy_file(cfg.strategy_dir, o);
        out.sets.push_back(std::move(o));
    }
    return out;
}

json outcome_json(const ExperimentConfig& cfg, const TaskOutcome& out) {
    json j;
    j["schema_version"] = 1;
    j["N"] = cfg.N;
    j["phi"] = round12(cfg.phi);
    j["process"] = cfg.process;
    json sets = json::object();
    for (const auto& o : out.sets) {
        json s;
        s["ok"] = o.ok;
        if (!o.error.empty()) s["error"] = o.error;
        s["lambda"] = round12(o.lambda);
        s["solver"] = {{"status", to_string(o.qfi.status)},
                       {"iterations", o.qfi.iterations},
                       {"rel_gap", round12(o.qfi.rel_gap)},
                       {"certificate_min_eig", round12(o.qfi.certificate_min_eig)}};
        if (o.synthesized)
            s["synthesis"] = {{"route", to_string(o.strategy.route)},
                              {"objective", round12(o.strategy.objective)},
                              {"saddle_residual", round12(o.saddle)},
                              {"membership_residual", round12(o.membership)}};
        if (o.verified)
            s["oracle"] = {{"j_sld", round12(o.report.j_sld)},
                           {"j_analytic", round12(o.report.j_analytic)},
                           {"oracle_gap", round12(o.report.rel_gap)},
                           {"fd_vs_analytic", round12(o.report.fd_vs_analytic)},
                           {"measurement_cfi", round12(o.report.oracle.measurement_cfi)}};
        s["seconds"] = round12(o.seconds);
        sets[o.set] = s;
    }
    j["sets"] = sets;
    j["failed"] = out.failed();
    return j;
}

SweepOutcome run_sweep(const ExperimentConfig& cfg, int jobs) {
    if (!cfg.sweep) throw ConfigError("config has no \"sweep\" section");
    const auto& grid = cfg.sweep->grid;
    std::vector<ExperimentConfig> points;
    for (double v : grid) {
        ExperimentConfig p = with_parameter(cfg, cfg.sweep->parameter, v);
        p.strategy_dir.clear();
        points.push_back(std::move(p));
    }
    std::vector<TaskOutcome> results(points.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < points.size(); i = next++) results[i] = run_task(points[i]);
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(points.size())));
    std::vector<std::thread> pool;
    for (int k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    SweepOutcome out;
    std::ostringstream csv;
    csv << "grid_value";
    for (const auto& s : cfg.sets) csv << "," << s;
    const bool gaps = cfg.verify;
    if (gaps)
        for (const auto& s : cfg.sets)
            if (s != "control_free") csv << ",oracle_gap_" << s;
    csv << ",status\n";
    for (size_t i = 0; i < grid.size(); ++i) {
        const TaskOutcome& r = results[i];
        csv << format12(grid[i]);
        for (const auto& o : r.sets) csv << "," << (o.ok ? format12(o.lambda) : "nan");
        if (gaps)
            for (const auto& o : r.sets)
                if (o.set != "control_free") csv << "," << (o.verified ? format12(o.report.rel_gap) : "nan");
        std::string status;
        for (const auto& o : r.sets)
            if (!o.ok) status += (status.empty() ? "failed:" : ";") + o.set;
        if (!status.empty()) ++out.failed_rows;
        csv << "," << (status.empty() ? "ok" : status) << "\n";
    }
    out.csv = csv.str();
    return out;
}

ValidationOutcome validate_strategy(const StrategyChoi& strategy, const ExperimentConfig& cfg) {
    CombFamily family = make_family(cfg.process, cfg.N);
    FactorizedComb fc = family(cfg.phi);
    if (!(strategy.marginal.layout() == fc.layout))
        throw ConfigError("strategy layout does not match the configured process");
    StrategyChoi s = strategy.purified ? strategy : purify_strategy(strategy);
    QfiOptions qopt;
    qopt.sdp.gap_tol = cfg.gap_tol;
    qopt.sdp.feas_tol = cfg.feas_tol;
    auto q = task_qfi(fc, s.spec, qopt);
    if (!q.ok()) throw std::runtime_error("solver ended with status " + to_string(q.status));
    ValidationOutcome v;
    v.lambda = q.value;
    v.report = verify_strategy(s, family, cfg.phi, q.value);
    v.membership = membership_residual(s);
    v.pass = oracle_accepts(v.report, cfg.oracle_gap_tol, cfg.gap_tol) && v.membership <= 1e-8;
    return v;
}

json validation_json(const ValidationOutcome& v) {
    return {{"schema_version", 1},
            {"lambda", round12(v.lambda)},
            {"j_sld", round12(v.report.j_sld)},
            {"j_analytic", round12(v.report.j_analytic)},
            {"oracle_gap", round12(v.report.rel_gap)},
            {"fd_vs_analytic", round12(v.report.fd_vs_analytic)},
            {"membership_residual", round12(v.membership)},
            {"pass", v.pass}};
}

}  // namespace qmetro
