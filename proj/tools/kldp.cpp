// kldp: simulate, tune, run and evaluate the two-terminal differential detector.

#include <glob.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <toml.hpp>

#include "kldp/errors.hpp"
#include "kldp/evalkit.hpp"
#include "kldp/feedersim.hpp"
#include "kldp/io.hpp"
#include "kldp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace kldp;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

// ---------------------------------------------------------------------------
// Layered settings: built-in default < config file < command-line flag
// ---------------------------------------------------------------------------

double parse_number(const std::string& text, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || *end != '\0') throw ValidationError(key + ": not a number: '" + text + "'");
    return v;
}

std::vector<double> parse_numbers(const std::vector<std::string>& items, const std::string& key) {
    std::vector<double> out;
    for (const auto& s : items) out.push_back(parse_number(s, key));
    return out;
}

std::string canon(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
std::string canon(std::int64_t v) { return std::to_string(v); }
std::string canon(bool v) { return v ? "true" : "false"; }
std::string canon(const std::string& v) { return v; }
template <class T>
std::string canon(const std::vector<T>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + canon(v[i]);
    return out + "]";
}

template <class T>
T from_node(const toml::node& node, const std::string& key);

template <>
double from_node<double>(const toml::node& node, const std::string& key) {
    if (auto v = node.value<double>()) return *v;
    if (auto s = node.value<std::string>()) return parse_number(*s, key);
    throw ValidationError(key + ": expected a number");
}

template <>
std::int64_t from_node<std::int64_t>(const toml::node& node, const std::string& key) {
    if (node.is_integer()) return *node.value<std::int64_t>();
    throw ValidationError(key + ": expected an integer");
}

template <>
bool from_node<bool>(const toml::node& node, const std::string& key) {
    if (auto v = node.value<bool>()) return *v;
    throw ValidationError(key + ": expected true or false");
}

template <>
std::string from_node<std::string>(const toml::node& node, const std::string& key) {
    if (auto v = node.value<std::string>()) return *v;
    throw ValidationError(key + ": expected a string");
}

template <>
std::vector<double> from_node<std::vector<double>>(const toml::node& node, const std::string& key) {
    const auto* arr = node.as_array();
    if (!arr) throw ValidationError(key + ": expected an array");
    std::vector<double> out;
    for (const auto& el : *arr) out.push_back(from_node<double>(el, key));
    return out;
}

template <>
std::vector<std::string> from_node<std::vector<std::string>>(const toml::node& node, const std::string& key) {
    const auto* arr = node.as_array();
    if (!arr) throw ValidationError(key + ": expected an array");
    std::vector<std::string> out;
    for (const auto& el : *arr) out.push_back(from_node<std::string>(el, key));
    return out;
}

class Settings {
public:
    Settings(const toml::table* root, std::string section) : root_(root), name_(std::move(section)) {
        if (root_) {
            if (const auto* node = root_->get(name_)) {
                section_ = node->as_table();
                if (!section_) throw ValidationError("[" + name_ + "] must be a table");
            }
        }
    }

    /// Keys marked `shared` may also sit at the top level of the config file.
    template <class T>
    T get(const std::string& key, const std::optional<T>& flag, T fallback, bool shared = false) {
        used_.insert(key);
        T value = std::move(fallback);
        if (shared && root_)
            if (const auto* node = root_->get(key)) value = from_node<T>(*node, key);
        if (section_)
            if (const auto* node = section_->get(key)) value = from_node<T>(*node, name_ + "." + key);
        if (flag) value = *flag;
        values_[key] = canon(value);
        return value;
    }

    /// Rejects keys the command does not understand.
    void finish() const {
        if (!section_) return;
        for (const auto& [k, v] : *section_) {
            if (!used_.count(std::string(k.str()))) throw ValidationError("unknown key " + name_ + "." + std::string(k.str()));
        }
    }

    /// Records a derived value that should contribute to the hash.
    void note(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Drops keys that locate files or tune parallelism but do not change results.
    void exclude(std::initializer_list<const char*> keys) {
        for (const char* k : keys) values_.erase(k);
    }

    std::string config_hash() const {
        std::string text = name_ + "\n";
        for (const auto& [k, v] : values_) text += k + "=" + v + "\n";
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(sim::fnv1a64(text)));
        return buf;
    }

private:
    const toml::table* root_ = nullptr;
    const toml::table* section_ = nullptr;
    std::string name_;
    std::set<std::string> used_;
    std::map<std::string, std::string> values_;
};

const std::set<std::string> kRootKeys{"seed", "jobs", "simulate", "tune", "run", "eval"};

std::optional<toml::table> load_config(const std::optional<std::string>& path) {
    if (!path) return std::nullopt;
    if (!fs::exists(*path)) throw IoError("config file not found: " + *path);
    try {
        toml::table t = toml::parse_file(*path);
        for (const auto& [k, v] : t)
            if (!kRootKeys.count(std::string(k.str()))) throw ValidationError("unknown top-level key " + std::string(k.str()));
        return t;
    } catch (const toml::parse_error& e) {
        throw ValidationError("cannot parse " + *path + ": " + std::string(e.description()));
    }
}

/// Expands a glob, or a directory into the files with the given suffix. Sorted.
std::vector<fs::path> expand(const std::string& pattern, const std::string& suffix) {
    std::vector<fs::path> out;
    if (fs::is_directory(pattern)) {
        for (const auto& e : fs::directory_iterator(pattern)) {
            const std::string name = e.path().filename().string();
            if (e.is_regular_file() && name.size() >= suffix.size() &&
                name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
                out.push_back(e.path());
        }
    } else {
        glob_t g{};
        if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
            for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
        globfree(&g);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool is_waveform_file(const fs::path& p) {
    const std::string name = p.filename().string();
    return p.extension() == ".csv" && name.find(".events.") == std::string::npos;
}

std::optional<io::ScenarioMeta> read_meta(const fs::path& waveform) {
    const fs::path side = io::sidecar_path(waveform);
    if (!fs::exists(side)) return std::nullopt;
    return io::meta_from_json(io::read_file(side));
}

// ---------------------------------------------------------------------------
// Options as parsed from the command line
// ---------------------------------------------------------------------------

struct Common {
    std::optional<std::string> config;
    std::optional<std::int64_t> seed;
    std::optional<std::string> out;
    std::optional<std::int64_t> jobs;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--config", c.config, "TOML configuration file");
    cmd->add_option("--seed", c.seed, "Root random seed");
    cmd->add_option("--out", c.out, out_help);
    cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

std::optional<std::vector<double>> numbers_flag(const std::vector<std::string>& raw, const std::string& key) {
    if (raw.empty()) return std::nullopt;
    return parse_numbers(raw, key);
}

std::optional<std::vector<std::string>> strings_flag(const std::vector<std::string>& raw) {
    if (raw.empty()) return std::nullopt;
    return raw;
}

struct SimulateFlags {
    Common common;
    std::optional<std::string> set;
    std::vector<std::string> labels, locations, r_f, modes, snr;
    std::optional<double> t_f, duration, load_amps, ibr_limit;
    std::optional<std::int64_t> n_healthy, n_external;
};

struct TuneFlags {
    Common common;
    std::optional<std::string> healthy;
    std::optional<std::int64_t> budget, vote_j, vote_m, window_l, window_s, k_min, k_max;
    std::vector<std::string> augment_snr;
    std::optional<double> alpha_det, alpha_cls, alpha_zero, lambda, dg_cls, dg0_cls, r_min, q_lo, q_hi;
    std::optional<std::string> line_id;
};

struct RunFlags {
    Common common;
    std::optional<std::string> waveforms, model;
    std::optional<double> delay_ms, alpha_det, alpha_cls, alpha_zero, lambda, dg_cls, dg0_cls;
    std::optional<std::int64_t> confirm, stability, vote_j, vote_m;
};

struct EvalFlags {
    Common common;
    std::optional<std::string> outcomes;
};

int as_int(std::int64_t v, const char* key, std::int64_t lo) {
    if (v < lo || v > 1'000'000'000) throw ValidationError(std::string(key) + " out of range");
    return static_cast<int>(v);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const SimulateFlags& f) {
    const auto config = load_config(f.common.config);
    Settings s(config ? &*config : nullptr, "simulate");
    const auto set = s.get<std::string>("set", f.set, "grid");
    const auto seed = static_cast<std::uint64_t>(s.get<std::int64_t>("seed", f.common.seed, 2024, true));
    const fs::path out = s.get<std::string>("out", f.common.out, "sim_out");
    const int jobs = as_int(s.get<std::int64_t>("jobs", f.common.jobs, 1, true), "jobs", 1);

    sim::ScenarioConfig base;
    base.duration_s = s.get<double>("duration_s", f.duration, base.duration_s);
    base.sample_rate_hz = s.get<double>("sample_rate_hz", std::nullopt, base.sample_rate_hz);
    base.fundamental_hz = s.get<double>("fundamental_hz", std::nullopt, base.fundamental_hz);
    base.load_amps_rms = s.get<double>("load_amps_rms", f.load_amps, base.load_amps_rms);
    base.power_factor = s.get<double>("power_factor", std::nullopt, base.power_factor);
    base.ibr_limit_pu = s.get<double>("ibr_limit_pu", f.ibr_limit, base.ibr_limit_pu);
    base.phase_jump_deg = s.get<double>("phase_jump_deg", std::nullopt, base.phase_jump_deg);
    base.validate();

    std::vector<sim::Scenario> scenarios;
    if (set == "grid") {
        sim::GridSpec g;
        g.base = base;
        g.seed = seed;
        std::vector<std::string> label_names;
        for (auto l : g.labels) label_names.emplace_back(to_string(l));
        label_names = s.get<std::vector<std::string>>("labels", strings_flag(f.labels), label_names);
        g.labels.clear();
        for (const auto& n : label_names) {
            const auto l = parse_fault_label(n);
            if (!l || *l == FaultLabel::unknown) throw ValidationError("unknown fault label: " + n);
            g.labels.push_back(*l);
        }
        g.locations = s.get<std::vector<double>>("locations", numbers_flag(f.locations, "locations"), g.locations);
        g.r_f = s.get<std::vector<double>>("r_f", numbers_flag(f.r_f, "r_f"), g.r_f);
        std::vector<std::string> mode_names{"grid", "islanded"};
        mode_names = s.get<std::vector<std::string>>("modes", strings_flag(f.modes), mode_names);
        g.modes.clear();
        for (const auto& n : mode_names) {
            const auto m = sim::parse_source_mode(n);
            if (!m) throw ValidationError("unknown source mode: " + n);
            g.modes.push_back(*m);
        }
        g.snr_db = s.get<std::vector<double>>("snr_db", numbers_flag(f.snr, "snr_db"), g.snr_db);
        g.t_f = s.get<double>("t_f", f.t_f, g.t_f);
        g.external_locations = s.get<std::vector<double>>("external_locations", std::nullopt, g.external_locations);
        g.external_r_f = s.get<double>("external_r_f", std::nullopt, g.external_r_f);
        if (!s.get<bool>("include_external", std::nullopt, true)) g.external_sides.clear();
        if (!s.get<bool>("include_healthy", std::nullopt, true)) g.healthy.clear();
        scenarios = sim::scenario_grid(g);
    } else if (set == "training") {
        sim::TrainingSpec t;
        t.base = base;
        t.seed = seed;
        t.n_healthy = as_int(s.get<std::int64_t>("n_healthy", f.n_healthy, t.n_healthy), "n_healthy", 0);
        t.n_external = as_int(s.get<std::int64_t>("n_external", f.n_external, t.n_external), "n_external", 0);
        t.load_min = s.get<double>("load_min", std::nullopt, t.load_min);
        t.load_max = s.get<double>("load_max", std::nullopt, t.load_max);
        t.step_probability = s.get<double>("step_probability", std::nullopt, t.step_probability);
        scenarios = sim::training_scenarios(t);
    } else {
        throw ValidationError("simulate.set must be 'grid' or 'training'");
    }
    s.finish();
    if (scenarios.empty()) throw ValidationError("no scenarios selected");
    for (const auto& sc : scenarios) {
        sc.cfg.validate();
        if (sc.fault) sc.fault->validate(sc.cfg.duration_s);
    }

    s.exclude({"out", "jobs"});
    const std::string hash = s.config_hash();
    pipeline::parallel_for(scenarios.size(), jobs, [&](std::size_t i) {
        const auto& sc = scenarios[i];
        const auto result = sim::simulate_scenario(sc.cfg, sc.fault, sc.id);
        const fs::path wave = out / (sc.id + ".csv");
        io::write_waveform(wave, result.record, hash);
        io::write_file_atomic(io::sidecar_path(wave), io::meta_to_json(io::scenario_meta(sc, result.truth, hash)));
    });
    nlohmann::ordered_json manifest;
    manifest["config_hash"] = hash;
    manifest["set"] = set;
    manifest["seed"] = seed;
    manifest["count"] = scenarios.size();
    auto& list = manifest["scenarios"] = nlohmann::ordered_json::array();
    for (const auto& sc : scenarios)
        list.push_back({{"id", sc.id},
                        {"kind", std::string(sim::to_string(sc.kind))},
                        {"waveform", sc.id + ".csv"},
                        {"truth", sc.id + ".truth.json"}});
    io::write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << scenarios.size() << " scenarios to " << out.string() << " (config_hash=" << hash << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

int cmd_tune(const TuneFlags& f) {
    const auto config = load_config(f.common.config);
    Settings s(config ? &*config : nullptr, "tune");
    const auto pattern = s.get<std::string>("healthy", f.healthy, "");
    const fs::path out = s.get<std::string>("out", f.common.out, "model.json");
    const auto seed = static_cast<std::uint64_t>(s.get<std::int64_t>("seed", f.common.seed, 1, true));
    const int jobs = as_int(s.get<std::int64_t>("jobs", f.common.jobs, 1, true), "jobs", 1);

    pipeline::TuneOptions opt;
    opt.window.length = as_int(s.get<std::int64_t>("window_l", f.window_l, opt.window.length), "window_l", 2);
    opt.window.hop = as_int(s.get<std::int64_t>("window_s", f.window_s, opt.window.hop), "window_s", 1);
    opt.augment.snr_db = s.get<std::vector<double>>("augment_snr_db", numbers_flag(f.augment_snr, "augment_snr_db"),
                                                    opt.augment.snr_db);
    opt.augment.seed = sim::splitmix64(seed);
    opt.optimizer.seed = sim::splitmix64(seed ^ 0x1234567ULL);
    opt.optimizer.jobs = jobs;
    opt.optimizer.budget = as_int(s.get<std::int64_t>("budget", f.budget, opt.optimizer.budget), "budget", 1);
    opt.optimizer.space.k_min = as_int(s.get<std::int64_t>("k_min", f.k_min, opt.optimizer.space.k_min), "k_min", 4);
    opt.optimizer.space.k_max = as_int(s.get<std::int64_t>("k_max", f.k_max, opt.optimizer.space.k_max), "k_max", 4);
    opt.optimizer.space.r_min = s.get<double>("r_min", f.r_min, opt.optimizer.space.r_min);
    opt.zones.lo = s.get<double>("q_lo", f.q_lo, opt.zones.lo);
    opt.zones.hi = s.get<double>("q_hi", f.q_hi, opt.zones.hi);
    opt.fit.alpha.det = s.get<double>("alpha_det", f.alpha_det, opt.fit.alpha.det);
    opt.fit.alpha.cls = s.get<double>("alpha_cls", f.alpha_cls, opt.fit.alpha.cls);
    opt.fit.alpha.zero = s.get<double>("alpha_zero", f.alpha_zero, opt.fit.alpha.zero);
    const double lambda = s.get<double>("lambda", f.lambda, -1.0);
    if (lambda >= 0.0) opt.fit.lambda = lambda;
    opt.fit.dg_cls = s.get<double>("dg_cls", f.dg_cls, opt.fit.dg_cls);
    opt.fit.dg0_cls = s.get<double>("dg0_cls", f.dg0_cls, opt.fit.dg0_cls);
    opt.fit.vote.j = as_int(s.get<std::int64_t>("vote_j", f.vote_j, opt.fit.vote.j), "vote_j", 1);
    opt.fit.vote.m = as_int(s.get<std::int64_t>("vote_m", f.vote_m, opt.fit.vote.m), "vote_m", 1);
    opt.fit.line_id = s.get<std::string>("line_id", f.line_id, opt.fit.line_id);
    s.finish();
    opt.fit.alpha.validate();
    opt.fit.vote.validate();
    if (pattern.empty()) throw ValidationError("tune needs --healthy <glob> (or tune.healthy in the config)");

    std::vector<WaveformRecord> records;
    std::vector<std::string> inputs;
    std::size_t skipped = 0;
    for (const auto& p : expand(pattern, ".csv")) {
        if (!is_waveform_file(p)) continue;
        const auto meta = read_meta(p);
        if (meta && meta->truth.internal && meta->truth.label) {
            ++skipped;
            continue;
        }
        records.push_back(io::read_waveform(p));
        inputs.push_back(p.filename().string());
    }
    if (skipped) std::cerr << "skipped " << skipped << " internal-fault record(s)\n";
    if (records.empty()) throw DegenerateInputError("no healthy waveform files match '" + pattern + "'");
    opt.window.sample_rate_hz = records.front().sample_rate_hz;

    auto result = pipeline::tune_model(records, opt);
    s.exclude({"healthy", "out", "jobs"});
    s.note("inputs", canon(inputs));
    result.model.config_hash = s.config_hash();
    io::write_model(out, result.model);

    const auto& t = result.tuning;
    std::printf("records %zu, windows %zu\n", records.size(), result.n_windows);
    std::printf("phase binning k=%d r=(%.4f, %.4f, %.4f) modal k_eff=%d\n", t.phase_spec.k, t.phase_spec.r1,
                t.phase_spec.r2, t.phase_spec.r3, t.phases.phases[0].modal_k_eff);
    std::printf("objective O=%.6f\n", t.phases.objective);
    const char* names = "abc";
    for (int p = 0; p < 3; ++p) std::printf("rho_sq[%c]=%.6f\n", names[p], t.phases.phases[p].rho * t.phases.phases[p].rho);
    std::printf("zero binning k0=%d rho0_sq=%.6f\n", t.zero_spec.k, t.zero.rho * t.zero.rho);
    std::printf("tau_det=%.4f z_cls=%.4f tau0_cls=%.4f\n", result.model.thresholds.tau_det,
                result.model.thresholds.z_cls, result.model.thresholds.tau0_cls);
    std::printf("model written to %s (config_hash=%s)\n", out.string().c_str(), result.model.config_hash.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const RunFlags& f) {
    const auto config = load_config(f.common.config);
    Settings s(config ? &*config : nullptr, "run");
    const auto pattern = s.get<std::string>("waveforms", f.waveforms, "");
    const auto model_path = s.get<std::string>("model", f.model, "model.json");
    const fs::path out = s.get<std::string>("out", f.common.out, "run_out");
    const int jobs = as_int(s.get<std::int64_t>("jobs", f.common.jobs, 1, true), "jobs", 1);
    s.get<std::int64_t>("seed", f.common.seed, 0, true);

    HealthyModel model = io::read_model(model_path);
    pipeline::RunOptions opt;
    opt.delay_ms = s.get<double>("delay_ms", f.delay_ms, 0.0);
    opt.stream.confirm_windows =
        as_int(s.get<std::int64_t>("confirm_windows", f.confirm, opt.stream.confirm_windows), "confirm_windows", 1);
    opt.stream.label_stability =
        as_int(s.get<std::int64_t>("label_stability", f.stability, opt.stream.label_stability), "label_stability", 1);

    AlphaConfig alpha = model.thresholds.alpha;
    alpha.det = s.get<double>("alpha_det", f.alpha_det, alpha.det);
    alpha.cls = s.get<double>("alpha_cls", f.alpha_cls, alpha.cls);
    alpha.zero = s.get<double>("alpha_zero", f.alpha_zero, alpha.zero);
    const double dg = s.get<double>("dg_cls", f.dg_cls, model.thresholds.dg_cls);
    const double dg0 = s.get<double>("dg0_cls", f.dg0_cls, model.thresholds.dg0_cls);
    model.thresholds = derive_thresholds(alpha, model.k0, dg, dg0);
    model.vote.j = as_int(s.get<std::int64_t>("vote_j", f.vote_j, model.vote.j), "vote_j", 1);
    model.vote.m = as_int(s.get<std::int64_t>("vote_m", f.vote_m, model.vote.m), "vote_m", 1);
    model.vote.validate();
    const double lambda = s.get<double>("lambda", f.lambda, model.covariance.lambda());
    if (lambda != model.covariance.lambda())
        model.covariance = stats::CovarianceModel(model.covariance.mu(), model.covariance.gamma(), lambda);
    s.finish();
    if (opt.delay_ms < 0.0) throw ValidationError("delay_ms must be non-negative");
    if (pattern.empty()) throw ValidationError("run needs --waveforms <glob> (or run.waveforms in the config)");

    std::vector<fs::path> files;
    for (const auto& p : expand(pattern, ".csv"))
        if (is_waveform_file(p)) files.push_back(p);
    if (files.empty()) throw ValidationError("no waveform files match '" + pattern + "'");

    s.exclude({"waveforms", "model", "out", "jobs"});
    s.note("model_hash", model.config_hash);
    std::vector<std::string> names;
    for (const auto& p : files) names.push_back(p.filename().string());
    s.note("inputs", canon(names));
    const std::string hash = s.config_hash();
    std::vector<std::string> lines(files.size());
    pipeline::parallel_for(files.size(), jobs, [&](std::size_t i) {
        const auto record = io::read_waveform(files[i]);
        pipeline::ScenarioInfo info;
        info.truth.scenario_id = files[i].stem().string();
        if (const auto meta = read_meta(files[i])) {
            info.truth = meta->truth;
            info.snr_db = meta->snr_db;
            info.source_mode = meta->source_mode;
        }
        const auto result = pipeline::run_record(record, info, model, opt);
        const std::string stem = files[i].stem().string();
        io::write_file_atomic(out / (stem + ".events.csv"), io::event_log_to_csv(result.stream, hash));
        io::write_file_atomic(out / (stem + ".outcome.json"), eval::outcome_to_json(result.outcome, hash));
        char buf[160];
        if (result.stream.detection)
            std::snprintf(buf, sizeof buf, "%s: trip at %.4f s, label %s", stem.c_str(), result.stream.detection->t_detect,
                          result.stream.label ? std::string(to_string(*result.stream.label)).c_str() : "pending");
        else
            std::snprintf(buf, sizeof buf, "%s: no trip", stem.c_str());
        lines[i] = buf;
    });
    for (const auto& l : lines) std::cout << l << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const EvalFlags& f) {
    const auto config = load_config(f.common.config);
    Settings s(config ? &*config : nullptr, "eval");
    const auto pattern = s.get<std::string>("outcomes", f.outcomes, "");
    const fs::path out = s.get<std::string>("out", f.common.out, "eval_out");
    s.get<std::int64_t>("seed", f.common.seed, 0, true);
    s.get<std::int64_t>("jobs", f.common.jobs, 1, true);
    s.finish();
    if (pattern.empty()) throw ValidationError("eval needs --outcomes <glob> (or eval.outcomes in the config)");

    const auto files = expand(pattern, ".outcome.json");
    if (files.empty()) throw ValidationError("no outcome files match '" + pattern + "'");
    std::vector<eval::DetectionOutcome> outcomes;
    for (const auto& p : files) outcomes.push_back(eval::outcome_from_json(io::read_file(p)));

    const auto report = eval::build_report(outcomes);
    s.exclude({"outcomes", "out", "jobs"});
    std::vector<std::string> names;
    for (const auto& p : files) names.push_back(p.filename().string());
    s.note("inputs", canon(names));
    const std::string hash = s.config_hash();
    eval::write_report(report, out, hash);

    std::printf("%-12s %10s %9s %8s %10s %10s\n", "scenario", "T_D (ms)", "FAR (%)", "P_D (%)", "Acc (%)", "F1 (%)");
    for (const auto& row : report.rows) {
        const auto& d = row.detection;
        const double acc = row.classification ? 100.0 * row.classification->accuracy : NAN;
        const double f1 = row.classification ? 100.0 * row.classification->macro_f1 : NAN;
        std::printf("%-12s %10.2f %9.4f %8.2f %10.2f %10.2f\n", row.scenario.c_str(), d.mean_t_d_ms, 100.0 * d.far,
                    100.0 * d.p_d, acc, f1);
    }
    if (report.roc) std::printf("AUC %.4f\n", report.roc->auc);
    std::printf("report written to %s (config_hash=%s)\n", out.string().c_str(), hash.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-terminal differential fault detection: simulate, tune, run, eval"};
    app.require_subcommand(1);

    SimulateFlags sf;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate waveform files and ground-truth sidecars");
    add_common(sim_cmd, sf.common, "Output directory");
    sim_cmd->add_option("--set", sf.set, "Scenario set: grid or training");
    sim_cmd->add_option("--labels", sf.labels, "Fault classes")->delimiter(',');
    sim_cmd->add_option("--locations", sf.locations, "Internal fault locations (fraction of line)")->delimiter(',');
    sim_cmd->add_option("--r-f", sf.r_f, "Fault resistances in ohm")->delimiter(',');
    sim_cmd->add_option("--modes", sf.modes, "Source modes: grid, islanded")->delimiter(',');
    sim_cmd->add_option("--snr-db", sf.snr, "SNR values in dB (inf for noise-free)")->delimiter(',');
    sim_cmd->add_option("--t-f", sf.t_f, "Fault inception time in s");
    sim_cmd->add_option("--duration-s", sf.duration, "Record duration in s");
    sim_cmd->add_option("--load-amps-rms", sf.load_amps, "Base load current, A rms");
    sim_cmd->add_option("--ibr-limit-pu", sf.ibr_limit, "Inverter current limit, pu of load");
    sim_cmd->add_option("--n-healthy", sf.n_healthy, "Training set: healthy records");
    sim_cmd->add_option("--n-external", sf.n_external, "Training set: external-fault records");

    TuneFlags tf;
    auto* tune_cmd = app.add_subcommand("tune", "Calibrate a healthy model from healthy waveform files");
    add_common(tune_cmd, tf.common, "Model file to write");
    tune_cmd->add_option("--healthy", tf.healthy, "Glob or directory of healthy waveform files");
    tune_cmd->add_option("--budget", tf.budget, "Objective evaluations per binning search");
    tune_cmd->add_option("--augment-snr-db", tf.augment_snr, "Noise augmentation SNRs in dB")->delimiter(',');
    tune_cmd->add_option("--alpha-det", tf.alpha_det, "Detection significance level");
    tune_cmd->add_option("--alpha-cls", tf.alpha_cls, "Per-phase classification significance level");
    tune_cmd->add_option("--alpha-zero", tf.alpha_zero, "Zero-sequence significance level");
    tune_cmd->add_option("--lambda", tf.lambda, "Covariance regularization (default 1e-6 trace/3)");
    tune_cmd->add_option("--dg-cls", tf.dg_cls, "Per-phase jump threshold");
    tune_cmd->add_option("--dg0-cls", tf.dg0_cls, "Zero-sequence jump threshold");
    tune_cmd->add_option("--vote-j", tf.vote_j, "Votes required");
    tune_cmd->add_option("--vote-m", tf.vote_m, "Vote window");
    tune_cmd->add_option("--window-l", tf.window_l, "Window length in samples");
    tune_cmd->add_option("--window-s", tf.window_s, "Window hop in samples");
    tune_cmd->add_option("--k-min", tf.k_min, "Smallest bin count searched");
    tune_cmd->add_option("--k-max", tf.k_max, "Largest bin count searched");
    tune_cmd->add_option("--r-min", tf.r_min, "Smallest zone ratio searched");
    tune_cmd->add_option("--q-lo", tf.q_lo, "Lower zone quantile");
    tune_cmd->add_option("--q-hi", tf.q_hi, "Upper zone quantile");
    tune_cmd->add_option("--line-id", tf.line_id, "Line identifier stored in the model");

    RunFlags rf;
    auto* run_cmd = app.add_subcommand("run", "Run the online engine over waveform files");
    add_common(run_cmd, rf.common, "Output directory for event logs and outcomes");
    run_cmd->add_option("--waveforms", rf.waveforms, "Glob or directory of waveform files");
    run_cmd->add_option("--model", rf.model, "Model file");
    run_cmd->add_option("--delay-ms", rf.delay_ms, "Receiving-side communication delay in ms");
    run_cmd->add_option("--confirm-windows", rf.confirm, "Consecutive exceedances before tripping");
    run_cmd->add_option("--label-stability", rf.stability, "Consecutive equal votes before reporting a label");
    run_cmd->add_option("--alpha-det", rf.alpha_det, "Override the detection significance level");
    run_cmd->add_option("--alpha-cls", rf.alpha_cls, "Override the classification significance level");
    run_cmd->add_option("--alpha-zero", rf.alpha_zero, "Override the zero-sequence significance level");
    run_cmd->add_option("--lambda", rf.lambda, "Override the covariance regularization");
    run_cmd->add_option("--dg-cls", rf.dg_cls, "Override the per-phase jump threshold");
    run_cmd->add_option("--dg0-cls", rf.dg0_cls, "Override the zero-sequence jump threshold");
    run_cmd->add_option("--vote-j", rf.vote_j, "Override the votes required");
    run_cmd->add_option("--vote-m", rf.vote_m, "Override the vote window");

    EvalFlags ef;
    auto* eval_cmd = app.add_subcommand("eval", "Aggregate outcome files into a report");
    add_common(eval_cmd, ef.common, "Report directory");
    eval_cmd->add_option("--outcomes", ef.outcomes, "Glob or directory of outcome files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*sim_cmd) return cmd_simulate(sf);
        if (*tune_cmd) return cmd_tune(tf);
        if (*run_cmd) return cmd_run(rf);
        if (*eval_cmd) return cmd_eval(ef);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const DegenerateInputError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConditioningError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DomainError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
