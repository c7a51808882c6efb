#include "kldp/feedersim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "kldp/errors.hpp"

namespace kldp::sim {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Phasor polar_deg(double mag, double deg) { return std::polar(mag, deg * kDeg); }

std::array<Phasor, 3> phase_voltages(const ScenarioConfig& cfg) {
    const double v = cfg.network.v_ll_kv * 1000.0 / std::numbers::sqrt3;
    return {polar_deg(v, 0.0), polar_deg(v, -120.0), polar_deg(v, 120.0)};
}

Phasor limit(Phasor value, std::optional<double> cap) {
    if (!cap) return value;
    const double mag = std::abs(value);
    return mag > *cap ? value * (*cap / mag) : value;
}

int phase_of(char c) { return c - 'a'; }

std::string fmt_number(double x) {
    if (std::isinf(x)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

}  // namespace

std::string_view to_string(SourceMode mode) { return mode == SourceMode::grid ? "grid" : "islanded"; }

std::optional<SourceMode> parse_source_mode(std::string_view text) {
    if (text == "grid") return SourceMode::grid;
    if (text == "islanded") return SourceMode::islanded;
    return std::nullopt;
}

std::string_view to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::healthy: return "healthy";
        case ScenarioKind::internal: return "internal";
        case ScenarioKind::external: return "external";
    }
    return "healthy";
}

void ScenarioConfig::validate() const {
    if (!(fundamental_hz > 0.0)) throw ValidationError("fundamental_hz must be positive");
    if (!(sample_rate_hz > 2.0 * fundamental_hz))
        throw ValidationError("sample_rate_hz must exceed twice the fundamental");
    if (!(duration_s >= 1.0 / fundamental_hz)) throw ValidationError("duration must cover at least one cycle");
    if (!(load_amps_rms > 0.0)) throw ValidationError("load_amps_rms must be positive");
    if (!(power_factor > 0.0 && power_factor <= 1.0)) throw ValidationError("power_factor must be in (0, 1]");
    if (!(ibr_limit_pu > 0.0)) throw ValidationError("ibr_limit_pu must be positive");
    if (snr_db && std::isnan(*snr_db)) throw ValidationError("snr_db is NaN");
    if (!(network.v_ll_kv > 0.0)) throw ValidationError("v_ll_kv must be positive");
    if (!(network.remote_ibr_rating > 0.0)) throw ValidationError("remote_ibr_rating must be positive");
    if (network.z_ground_local < 0.0 || network.z_ground_remote < 0.0)
        throw ValidationError("ground impedances must be non-negative");
    for (const auto& step : load_steps) {
        if (!(step.factor > 0.0)) throw ValidationError("load step factor must be positive");
        if (!(step.t_s >= 0.0 && step.t_s < duration_s)) throw ValidationError("load step outside the record");
    }
}

double ScenarioConfig::load_factor_at(double t_s) const {
    double factor = 1.0;
    double latest = -1.0;
    for (const auto& step : load_steps) {
        if (step.t_s <= t_s && step.t_s >= latest) {
            factor = step.factor;
            latest = step.t_s;
        }
    }
    return factor;
}

void FaultSpec::validate(double duration_s) const {
    if (label == FaultLabel::unknown) throw ValidationError("fault label must be one of the ten classes");
    if (!(t_f >= 0.0 && t_f < duration_s)) throw ValidationError("fault inception outside the record");
    if (!(location_frac > 0.0 && location_frac < 1.0)) throw ValidationError("location_frac must be in (0, 1)");
    if (involvement(label).ground && !r_f) throw ValidationError("ground faults require a fault resistance");
    if (r_f && !(*r_f >= 0.1 && *r_f <= 250.0)) throw ValidationError("r_f must be in [0.1, 250] ohm");
}

bool GroundTruth::window_faulty(double t_end) const { return internal && t_f && t_end >= *t_f; }

std::vector<bool> GroundTruth::tag_windows(const std::vector<calib::Window>& windows) const {
    std::vector<bool> tags;
    tags.reserve(windows.size());
    for (const auto& w : windows) tags.push_back(window_faulty(w.t_end));
    return tags;
}

std::array<Phasor, 3> load_phasors(const ScenarioConfig& cfg, double factor) {
    const double mag = cfg.load_amps_rms * factor;
    const double lag = -std::acos(cfg.power_factor) / kDeg;
    return {polar_deg(mag, lag), polar_deg(mag, lag - 120.0), polar_deg(mag, lag + 120.0)};
}

double receiving_cap(const ScenarioConfig& cfg, double load_factor) {
    return cfg.ibr_limit_pu * cfg.network.remote_ibr_rating * cfg.load_amps_rms * load_factor;
}

std::optional<double> sending_cap(const ScenarioConfig& cfg, double load_factor) {
    if (cfg.source_mode == SourceMode::grid) return std::nullopt;
    return cfg.ibr_limit_pu * cfg.load_amps_rms * load_factor;
}

namespace {

// Fault contribution of one infeed with Thevenin impedance z_th and ground return z_g.
std::array<Phasor, 3> infeed_contribution(const ScenarioConfig& cfg, FaultLabel label, Phasor z_th, double z_g,
                                          double r_f) {
    const auto v = phase_voltages(cfg);
    const PhaseSet inv = involvement(label);
    const std::string_view name = to_string(label);
    std::array<Phasor, 3> out{};
    if (inv.ground) {
        for (int p = 0; p < 3; ++p) {
            if ((p == 0 && inv.a) || (p == 1 && inv.b) || (p == 2 && inv.c)) out[p] = v[p] / (z_th + z_g + r_f);
        }
    } else if (label == FaultLabel::abc) {
        for (int p = 0; p < 3; ++p) out[p] = v[p] / (z_th + r_f);
    } else {
        const int p = phase_of(name[0]);
        const int q = phase_of(name[1]);
        out[p] = (v[p] - v[q]) / (2.0 * z_th + r_f);
        out[q] = -out[p];
    }
    return out;
}

std::array<Phasor, 3> capped(std::array<Phasor, 3> in, std::optional<double> cap) {
    for (auto& x : in) x = limit(x, cap);
    return in;
}

}  // namespace

FaultPhasors internal_fault_phasors(const ScenarioConfig& cfg, const FaultSpec& fault) {
    const auto& net = cfg.network;
    const double r_f = fault.r_f.value_or(0.0);
    const double lf = cfg.load_factor_at(fault.t_f);
    const Phasor z_s = net.z_source_local + net.z_line * fault.location_frac;
    const Phasor z_r = net.z_source_remote + net.z_line * (1.0 - fault.location_frac);
    FaultPhasors out;
    out.sending = capped(infeed_contribution(cfg, fault.label, z_s, net.z_ground_local, r_f), sending_cap(cfg, lf));
    out.receiving = capped(infeed_contribution(cfg, fault.label, z_r, net.z_ground_remote, r_f), receiving_cap(cfg, lf));
    return out;
}

std::array<Phasor, 3> external_through_phasors(const ScenarioConfig& cfg, const FaultSpec& fault) {
    const auto& net = cfg.network;
    const double r_f = fault.r_f.value_or(0.0);
    const double lf = cfg.load_factor_at(fault.t_f);
    const Phasor z_adj = net.z_adjacent * fault.location_frac;
    if (fault.side == ExternalSide::remote) {
        const Phasor z = net.z_source_local + net.z_line + z_adj;
        return capped(infeed_contribution(cfg, fault.label, z, net.z_ground_local, r_f), sending_cap(cfg, lf));
    }
    const Phasor z = net.z_source_remote + net.z_line + z_adj;
    auto through = capped(infeed_contribution(cfg, fault.label, z, net.z_ground_remote, r_f), receiving_cap(cfg, lf));
    for (auto& x : through) x = -x;
    return through;
}

SimulationResult simulate_scenario(const ScenarioConfig& cfg, const std::optional<FaultSpec>& fault,
                                   const std::string& scenario_id) {
    cfg.validate();
    if (fault) fault->validate(cfg.duration_s);

    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
    const double omega = 2.0 * std::numbers::pi * cfg.fundamental_hz;
    std::mt19937_64 rng(splitmix64(cfg.seed));
    const double theta0 = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);

    std::array<Phasor, 3> add_s{}, add_r{};
    if (fault) {
        const Phasor jump = std::polar(1.0, cfg.phase_jump_deg * kDeg);
        if (fault->internal) {
            const auto f = internal_fault_phasors(cfg, *fault);
            for (int p = 0; p < 3; ++p) {
                add_s[p] = f.sending[p] * jump;
                add_r[p] = -f.receiving[p] * jump;
            }
        } else {
            const auto t = external_through_phasors(cfg, *fault);
            for (int p = 0; p < 3; ++p) add_s[p] = add_r[p] = t[p] * jump;
        }
    }

    SimulationResult out;
    WaveformRecord& rec = out.record;
    rec.sample_rate_hz = cfg.sample_rate_hz;
    rec.t0_s = 0.0;
    for (auto& ch : rec.channels) ch.resize(n);

    double cached_factor = std::numeric_limits<double>::quiet_NaN();
    std::array<Phasor, 3> load{};
    std::size_t n_prefault = n;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = rec.time_at(k);
        const double factor = cfg.load_factor_at(t);
        if (factor != cached_factor) {
            load = load_phasors(cfg, factor);
            cached_factor = factor;
        }
        const bool active = fault && t >= fault->t_f;
        if (active && n_prefault == n) n_prefault = k;
        const Phasor rot = std::polar(std::numbers::sqrt2, omega * t + theta0);
        for (int p = 0; p < 3; ++p) {
            const Phasor s = active ? load[p] + add_s[p] : load[p];
            const Phasor r = active ? load[p] + add_r[p] : load[p];
            rec.channels[p][k] = (s * rot).real();
            rec.channels[3 + p][k] = (r * rot).real();
        }
    }

    if (cfg.snr_db && std::isfinite(*cfg.snr_db)) {
        const std::size_t ref_len = n_prefault > 0 ? n_prefault : n;
        for (std::size_t c = 0; c < kPhaseChannels; ++c) {
            auto& ch = rec.channels[c];
            double ss = 0.0;
            for (std::size_t k = 0; k < ref_len; ++k) ss += ch[k] * ch[k];
            const double ref_rms = std::sqrt(ss / static_cast<double>(ref_len));
            const std::uint64_t ch_seed = splitmix64(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (c + 1)));
            ch = calib::augment_noise(ch, *cfg.snr_db, ch_seed, ref_rms);
        }
    }

    GroundTruth& truth = out.truth;
    truth.scenario_id = scenario_id;
    truth.seed = cfg.seed;
    if (fault) {
        truth.t_f = fault->t_f;
        truth.label = fault->label;
        truth.internal = fault->internal;
    }
    return out;
}

std::size_t delay_samples(double sample_rate_hz, double delay_ms) {
    if (!(delay_ms >= 0.0)) throw ValidationError("delay must be non-negative");
    return static_cast<std::size_t>(std::llround(delay_ms * 1e-3 * sample_rate_hz));
}

WaveformRecord apply_comm_delay(const WaveformRecord& record, double delay_ms) {
    const std::size_t shift = delay_samples(record.sample_rate_hz, delay_ms);
    if (shift == 0) return record;
    if (shift >= record.size()) throw ValidationError("delay longer than the record");
    WaveformRecord out = record;
    for (std::size_t c = kIaR; c <= kIcR; ++c) {
        const auto& src = record.channels[c];
        auto& dst = out.channels[c];
        std::fill(dst.begin(), dst.begin() + static_cast<std::ptrdiff_t>(shift), src.front());
        std::copy(src.begin(), src.end() - static_cast<std::ptrdiff_t>(shift),
                  dst.begin() + static_cast<std::ptrdiff_t>(shift));
    }
    return out;
}

std::vector<HealthyVariant> default_healthy_variants() {
    return {
        {"const0.6", {{0.0, 0.6}}},
        {"const1.0", {}},
        {"const1.3", {{0.0, 1.3}}},
        {"stepup", {{0.1, 1.5}}},
        {"stepdown", {{0.1, 0.7}}},
        {"twostep", {{0.07, 1.3}, {0.14, 0.8}}},
    };
}

std::vector<Scenario> scenario_grid(const GridSpec& spec) {
    std::vector<Scenario> out;
    for (SourceMode mode : spec.modes) {
        for (double snr : spec.snr_db) {
            const std::string prefix = std::string(to_string(mode)) + "-snr" + fmt_number(snr);
            ScenarioConfig base = spec.base;
            base.source_mode = mode;
            base.snr_db = std::isfinite(snr) ? std::optional<double>(snr) : std::nullopt;
            auto push = [&](std::string id, ScenarioKind kind, std::optional<FaultSpec> fault,
                            std::vector<LoadStep> steps) {
                Scenario s;
                s.id = std::move(id);
                s.kind = kind;
                s.cfg = base;
                if (!steps.empty()) s.cfg.load_steps = std::move(steps);
                s.cfg.seed = derive_seed(spec.seed, s.id);
                s.fault = std::move(fault);
                out.push_back(std::move(s));
            };
            for (FaultLabel label : spec.labels) {
                const std::string name(to_string(label));
                for (double loc : spec.locations) {
                    for (double rf : spec.r_f) {
                        FaultSpec f;
                        f.t_f = spec.t_f;
                        f.label = label;
                        f.r_f = rf;
                        f.location_frac = loc;
                        f.internal = true;
                        push(prefix + "-int-" + name + "-loc" + fmt_number(loc) + "-rf" + fmt_number(rf),
                             ScenarioKind::internal, f, {});
                    }
                }
                for (ExternalSide side : spec.external_sides) {
                    for (double loc : spec.external_locations) {
                        FaultSpec f;
                        f.t_f = spec.t_f;
                        f.label = label;
                        f.r_f = spec.external_r_f;
                        f.location_frac = loc;
                        f.internal = false;
                        f.side = side;
                        push(prefix + "-ext-" + name + (side == ExternalSide::remote ? "-remote" : "-local") +
                                 "-loc" + fmt_number(loc),
                             ScenarioKind::external, f, {});
                    }
                }
            }
            for (const auto& variant : spec.healthy)
                push(prefix + "-healthy-" + variant.name, ScenarioKind::healthy, std::nullopt, variant.steps);
        }
    }
    return out;
}

std::vector<Scenario> training_scenarios(const TrainingSpec& spec) {
    if (spec.n_healthy < 0 || spec.n_external < 0) throw ValidationError("training counts must be non-negative");
    if (!(spec.load_min > 0.0 && spec.load_max >= spec.load_min)) throw ValidationError("invalid load range");
    std::mt19937_64 rng(splitmix64(spec.seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double duration = spec.base.duration_s;
    auto load = [&] { return spec.load_min + (spec.load_max - spec.load_min) * unit(rng); };
    auto profile = [&] {
        std::vector<LoadStep> steps{{0.0, load()}};
        if (unit(rng) < spec.step_probability) steps.push_back({duration * (0.2 + 0.6 * unit(rng)), load()});
        return steps;
    };
    auto mode = [&] { return unit(rng) < 0.5 ? SourceMode::grid : SourceMode::islanded; };

    std::vector<Scenario> out;
    char buf[64];
    for (int i = 0; i < spec.n_healthy; ++i) {
        Scenario s;
        std::snprintf(buf, sizeof buf, "train-healthy-%03d", i);
        s.id = buf;
        s.kind = ScenarioKind::healthy;
        s.cfg = spec.base;
        s.cfg.snr_db.reset();
        s.cfg.source_mode = mode();
        s.cfg.load_steps = profile();
        s.cfg.seed = derive_seed(spec.seed, s.id);
        out.push_back(std::move(s));
    }
    static constexpr std::array<double, 5> kRf{0.1, 50.0, 100.0, 150.0, 250.0};
    for (int i = 0; i < spec.n_external; ++i) {
        Scenario s;
        std::snprintf(buf, sizeof buf, "train-external-%03d", i);
        s.id = buf;
        s.kind = ScenarioKind::external;
        s.cfg = spec.base;
        s.cfg.snr_db.reset();
        s.cfg.source_mode = mode();
        s.cfg.load_steps = {{0.0, load()}};
        s.cfg.seed = derive_seed(spec.seed, s.id);
        FaultSpec f;
        f.label = kFaultClasses[static_cast<std::size_t>(unit(rng) * kFaultClasses.size()) % kFaultClasses.size()];
        f.internal = false;
        f.side = unit(rng) < 0.5 ? ExternalSide::remote : ExternalSide::local;
        f.location_frac = 0.01 + 0.98 * unit(rng);
        f.r_f = kRf[static_cast<std::size_t>(unit(rng) * kRf.size()) % kRf.size()];
        f.t_f = duration * (0.3 + 0.4 * unit(rng));
        s.fault = f;
        out.push_back(std::move(s));
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view id) { return splitmix64(root ^ fnv1a64(id)); }

}  // namespace kldp::sim
