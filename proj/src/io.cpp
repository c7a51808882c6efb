#include "kldp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kldp/errors.hpp"

namespace kldp::io {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kWaveHeader = "t_s,ia_s,ib_s,ic_s,ia_r,ib_r,ic_r";

void append_num(std::string& out, double x, const char* fmt = "%.10g") {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, fmt, x);
    out.append(buf, static_cast<std::size_t>(n));
}

double parse_double(std::string_view s, std::size_t line) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError("line " + std::to_string(line) + ": not a number: '" + std::string(s) + "'");
    return v;
}

json opt(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

json spec_json(const BinningSpec& s) { return json{{"k", s.k}, {"r1", s.r1}, {"r2", s.r2}, {"r3", s.r3}}; }

BinningSpec spec_from(const json& j) {
    BinningSpec s;
    s.k = j.at("k").get<int>();
    s.r1 = j.at("r1").get<double>();
    s.r2 = j.at("r2").get<double>();
    s.r3 = j.at("r3").get<double>();
    s.validate();
    return s;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); }

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string waveform_to_csv(const WaveformRecord& record, const std::string& config_hash) {
    std::string out;
    out.reserve(record.size() * 96 + 128);
    out += "# config_hash=" + config_hash + "\n";
    out += "# sample_rate_hz=";
    append_num(out, record.sample_rate_hz, "%.17g");
    out += "\n";
    out += kWaveHeader;
    out += "\n";
    for (std::size_t n = 0; n < record.size(); ++n) {
        append_num(out, record.time_at(n), "%.9g");
        for (const auto& ch : record.channels) {
            out += ',';
            append_num(out, ch[n]);
        }
        out += '\n';
    }
    return out;
}

WaveformRecord waveform_from_csv(const std::string& text) {
    WaveformRecord rec;
    std::optional<double> rate;
    std::vector<double> times;
    bool header_seen = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            constexpr std::string_view key = "# sample_rate_hz=";
            if (line.substr(0, key.size()) == key) rate = parse_double(line.substr(key.size()), line_no);
            continue;
        }
        if (!header_seen) {
            if (line != kWaveHeader) throw ValidationError("waveform header must be " + std::string(kWaveHeader));
            header_seen = true;
            continue;
        }
        std::array<double, 7> v{};
        std::size_t field = 0, start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (field >= v.size()) throw ShapeError("line " + std::to_string(line_no) + ": too many columns");
                v[field++] = parse_double(line.substr(start, i - start), line_no);
                start = i + 1;
            }
        }
        if (field != v.size()) throw ShapeError("line " + std::to_string(line_no) + ": expected 7 columns");
        times.push_back(v[0]);
        for (std::size_t c = 0; c < kPhaseChannels; ++c) rec.channels[c].push_back(v[c + 1]);
    }
    if (!header_seen) throw ValidationError("waveform file has no header row");
    if (times.empty()) throw DegenerateInputError("waveform file has no samples");
    rec.t0_s = times.front();
    if (rate) {
        rec.sample_rate_hz = *rate;
    } else {
        if (times.size() < 2) throw ValidationError("cannot infer the sample rate from one sample");
        rec.sample_rate_hz = std::round(static_cast<double>(times.size() - 1) / (times.back() - times.front()));
    }
    if (!(rec.sample_rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
    return rec;
}

void write_waveform(const std::filesystem::path& path, const WaveformRecord& record, const std::string& config_hash) {
    write_file_atomic(path, waveform_to_csv(record, config_hash));
}

WaveformRecord read_waveform(const std::filesystem::path& path) { return waveform_from_csv(read_file(path)); }

ScenarioMeta scenario_meta(const sim::Scenario& scenario, const sim::GroundTruth& truth, const std::string& config_hash) {
    ScenarioMeta m;
    m.truth = truth;
    m.kind = std::string(sim::to_string(scenario.kind));
    m.source_mode = std::string(sim::to_string(scenario.cfg.source_mode));
    if (scenario.cfg.snr_db && std::isfinite(*scenario.cfg.snr_db)) m.snr_db = scenario.cfg.snr_db;
    if (scenario.fault) {
        m.r_f = scenario.fault->r_f;
        m.location_frac = scenario.fault->location_frac;
    }
    m.config_hash = config_hash;
    return m;
}

std::string meta_to_json(const ScenarioMeta& m) {
    json j;
    j["t_f"] = opt(m.truth.t_f);
    j["label"] = m.truth.label ? json(std::string(to_string(*m.truth.label))) : json("healthy");
    j["internal"] = m.truth.internal;
    j["scenario_id"] = m.truth.scenario_id;
    j["seed"] = m.truth.seed;
    j["kind"] = m.kind;
    j["source_mode"] = m.source_mode;
    j["snr_db"] = opt(m.snr_db);
    j["r_f"] = opt(m.r_f);
    j["location_frac"] = opt(m.location_frac);
    j["config_hash"] = m.config_hash;
    return j.dump(2) + "\n";
}

ScenarioMeta meta_from_json(const std::string& text) {
    ScenarioMeta m;
    try {
        const json j = json::parse(text);
        m.truth.t_f = opt_from(j, "t_f");
        const auto label = j.at("label").get<std::string>();
        if (label != "healthy") {
            const auto parsed = parse_fault_label(label);
            if (!parsed) throw ValidationError("unrecognized fault label: " + label);
            m.truth.label = parsed;
        }
        m.truth.internal = j.at("internal").get<bool>();
        m.truth.scenario_id = j.at("scenario_id").get<std::string>();
        m.truth.seed = j.at("seed").get<std::uint64_t>();
        m.kind = j.value("kind", m.truth.label ? (m.truth.internal ? "internal" : "external") : "healthy");
        m.source_mode = j.value("source_mode", "grid");
        m.snr_db = opt_from(j, "snr_db");
        m.r_f = opt_from(j, "r_f");
        m.location_frac = opt_from(j, "location_frac");
        m.config_hash = j.value("config_hash", "");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed ground-truth document: ") + e.what());
    }
    if (m.truth.label && !m.truth.t_f) throw ValidationError("faulted scenario without t_f");
    return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& waveform_path) {
    std::filesystem::path p = waveform_path;
    p.replace_extension(".truth.json");
    return p;
}

std::string model_to_json(const HealthyModel& model) {
    json j;
    j["schema_version"] = HealthyModel::kSchemaVersion;
    j["line_id"] = model.line_id;
    j["config_hash"] = model.config_hash;
    j["window"] = {{"L", model.window.length}, {"S", model.window.hop}, {"sample_rate_hz", model.window.sample_rate_hz}};
    j["edges"] = {{"a", model.edges[0].edges},
                  {"b", model.edges[1].edges},
                  {"c", model.edges[2].edges},
                  {"zero", model.edges[3].edges}};
    const auto& mu = model.covariance.mu();
    const auto& g = model.covariance.gamma();
    j["mu"] = {mu[0], mu[1], mu[2]};
    j["gamma"] = json::array();
    for (int r = 0; r < 3; ++r) j["gamma"].push_back({g(r, 0), g(r, 1), g(r, 2)});
    j["lambda"] = model.covariance.lambda();
    j["mu_p"] = model.mu_p;
    j["sigma_p"] = model.sigma_p;
    j["k0"] = model.k0;
    const auto& t = model.thresholds;
    j["thresholds"] = {{"tau_det", t.tau_det},   {"z_cls", t.z_cls},         {"tau0_cls", t.tau0_cls},
                       {"dG_cls", t.dg_cls},     {"dG0_cls", t.dg0_cls},     {"alpha_det", t.alpha.det},
                       {"alpha_cls", t.alpha.cls}, {"alpha_zero", t.alpha.zero}};
    j["vote"] = {{"j", model.vote.j}, {"m", model.vote.m}};
    j["rho_sq"] = model.rho_sq;
    if (model.phase_binning || model.zero_binning) {
        json b;
        if (model.phase_binning) b["phase"] = spec_json(*model.phase_binning);
        if (model.zero_binning) b["zero"] = spec_json(*model.zero_binning);
        j["binning"] = b;
    }
    return j.dump(2) + "\n";
}

HealthyModel model_from_json(const std::string& text) {
    HealthyModel m;
    try {
        const json j = json::parse(text);
        if (j.at("schema_version").get<int>() != HealthyModel::kSchemaVersion)
            throw ValidationError("unsupported model schema version");
        m.line_id = j.value("line_id", "line");
        m.config_hash = j.value("config_hash", "");
        const auto& w = j.at("window");
        m.window.length = w.at("L").get<int>();
        m.window.hop = w.at("S").get<int>();
        m.window.sample_rate_hz = w.at("sample_rate_hz").get<double>();
        m.window.validate();
        const auto& e = j.at("edges");
        const char* keys[4] = {"a", "b", "c", "zero"};
        for (int i = 0; i < 4; ++i) {
            m.edges[i].edges = e.at(keys[i]).get<std::vector<double>>();
            m.edges[i].validate();
        }
        const auto mu = j.at("mu").get<std::vector<double>>();
        const auto gamma = j.at("gamma").get<std::vector<std::vector<double>>>();
        if (mu.size() != 3 || gamma.size() != 3) throw ShapeError("mu must have 3 entries and gamma 3 rows");
        stats::Vec3 mv(mu[0], mu[1], mu[2]);
        stats::Mat3 gm;
        for (int r = 0; r < 3; ++r) {
            if (gamma[r].size() != 3) throw ShapeError("gamma rows must have 3 entries");
            for (int c = 0; c < 3; ++c) gm(r, c) = gamma[r][c];
        }
        m.covariance = stats::CovarianceModel(mv, gm, j.at("lambda").get<double>());
        m.mu_p = j.at("mu_p").get<std::array<double, 3>>();
        m.sigma_p = j.at("sigma_p").get<std::array<double, 3>>();
        m.k0 = j.at("k0").get<int>();
        const auto& t = j.at("thresholds");
        m.thresholds.tau_det = t.at("tau_det").get<double>();
        m.thresholds.z_cls = t.at("z_cls").get<double>();
        m.thresholds.tau0_cls = t.at("tau0_cls").get<double>();
        m.thresholds.dg_cls = t.at("dG_cls").get<double>();
        m.thresholds.dg0_cls = t.at("dG0_cls").get<double>();
        m.thresholds.alpha.det = t.at("alpha_det").get<double>();
        m.thresholds.alpha.cls = t.at("alpha_cls").get<double>();
        m.thresholds.alpha.zero = t.at("alpha_zero").get<double>();
        m.vote.j = j.at("vote").at("j").get<int>();
        m.vote.m = j.at("vote").at("m").get<int>();
        m.vote.validate();
        m.rho_sq = j.at("rho_sq").get<double>();
        if (j.contains("binning")) {
            const auto& b = j.at("binning");
            if (b.contains("phase")) m.phase_binning = spec_from(b.at("phase"));
            if (b.contains("zero")) m.zero_binning = spec_from(b.at("zero"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model document: ") + e.what());
    }
    if (m.edges[3].n_bins() != m.k0) throw ValidationError("k0 disagrees with the zero-sequence edges");
    const Thresholds expect = derive_thresholds(m.thresholds.alpha, m.k0, m.thresholds.dg_cls, m.thresholds.dg0_cls);
    if (!close(m.thresholds.tau_det, expect.tau_det) || !close(m.thresholds.z_cls, expect.z_cls) ||
        !close(m.thresholds.tau0_cls, expect.tau0_cls))
        throw ValidationError("stored thresholds disagree with the stored significance levels");
    return m;
}

void write_model(const std::filesystem::path& path, const HealthyModel& model) {
    write_file_atomic(path, model_to_json(model));
}

HealthyModel read_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

std::string event_log_to_csv(const engine::StreamResult& result, const std::string& config_hash) {
    std::string out = "# config_hash=" + config_hash + "\n";
    out += "t_end_s,d_sq,z_a,z_b,z_c,g0,flags,tripped,label\n";
    for (const auto& w : result.windows) {
        append_num(out, w.t_end, "%.9g");
        out += ',';
        append_num(out, w.d_sq, "%.17g");
        for (double z : w.z) {
            out += ',';
            append_num(out, z, "%.17g");
        }
        out += ',';
        append_num(out, w.g0, "%.17g");
        out += ',';
        out += w.flags.a ? '1' : '0';
        out += w.flags.b ? '1' : '0';
        out += w.flags.c ? '1' : '0';
        out += w.flags.ground ? '1' : '0';
        out += w.tripped ? ",1," : ",0,";
        if (w.label) out += to_string(*w.label);
        out += '\n';
    }
    return out;
}

}  // namespace kldp::io
