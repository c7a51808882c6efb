#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kldp/calibrate.hpp"
#include "kldp/fault_label.hpp"
#include "kldp/waveform.hpp"

namespace kldp::sim {

using Phasor = std::complex<double>;

enum class SourceMode { grid, islanded };

std::string_view to_string(SourceMode mode);
std::optional<SourceMode> parse_source_mode(std::string_view text);

/// Load factor relative to the base load, effective from `t_s` onwards.
struct LoadStep {
    double t_s = 0.0;
    double factor = 1.0;
};

/// Per-phase impedances (ohms) of the two-terminal feeder model.
struct NetworkParams {
    double v_ll_kv = 22.0;
    Phasor z_source_local{1.0, 6.27};   // grid infeed behind the sending bus
    Phasor z_source_remote{20.0, 40.0}; // DER infeed behind the receiving bus
    Phasor z_line{0.8, 1.2};            // protected line
    Phasor z_adjacent{0.8, 1.2};        // line beyond either bus, for external faults
    double z_ground_local = 0.0;
    double z_ground_remote = 150.0;
    /// Remote DER rating as a fraction of the base load; caps the receiving infeed.
    double remote_ibr_rating = 0.5;
};

struct ScenarioConfig {
    double duration_s = 0.2;
    double sample_rate_hz = 10000.0;
    double fundamental_hz = 50.0;
    double load_amps_rms = 200.0;
    double power_factor = 0.9;
    std::vector<LoadStep> load_steps;
    SourceMode source_mode = SourceMode::grid;
    double ibr_limit_pu = 1.5;
    std::optional<double> snr_db;  // no noise when absent or infinite
    double phase_jump_deg = -30.0;
    std::uint64_t seed = 1;
    NetworkParams network;

    void validate() const;
    double load_factor_at(double t_s) const;
};

enum class ExternalSide { remote, local };

struct FaultSpec {
    double t_f = 0.1;
    FaultLabel label = FaultLabel::ag;
    std::optional<double> r_f;  // required for ground faults; absent means bolted
    double location_frac = 0.5; // along the protected line, or along the adjacent line if external
    bool internal = true;
    ExternalSide side = ExternalSide::remote;

    void validate(double duration_s) const;
};

struct GroundTruth {
    std::string scenario_id;
    std::uint64_t seed = 0;
    std::optional<double> t_f;
    std::optional<FaultLabel> label;  // absent for healthy scenarios
    bool internal = false;

    /// True when an internal fault is active at some point of [t_start, t_end].
    bool window_faulty(double t_end) const;
    std::vector<bool> tag_windows(const std::vector<calib::Window>& windows) const;
};

/// Fault-component phasors at each terminal before the phase jump, per phase a, b, c.
struct FaultPhasors {
    std::array<Phasor, 3> sending{};
    std::array<Phasor, 3> receiving{};
};

/// Terminal fault contributions for an internal fault, after current limiting.
FaultPhasors internal_fault_phasors(const ScenarioConfig& cfg, const FaultSpec& fault);

/// Through-current added at both terminals for an external fault.
std::array<Phasor, 3> external_through_phasors(const ScenarioConfig& cfg, const FaultSpec& fault);

/// Pre-fault load phasors (rms amperes) at the given load factor.
std::array<Phasor, 3> load_phasors(const ScenarioConfig& cfg, double factor);

/// Receiving-terminal infeed cap; the sending infeed is capped only in islanded mode.
double receiving_cap(const ScenarioConfig& cfg, double load_factor);
std::optional<double> sending_cap(const ScenarioConfig& cfg, double load_factor);

struct SimulationResult {
    WaveformRecord record;
    GroundTruth truth;
};

/// Phasor-superposition record of both terminals. Pure in (cfg, fault).
SimulationResult simulate_scenario(const ScenarioConfig& cfg, const std::optional<FaultSpec>& fault,
                                   const std::string& scenario_id = "scenario");

/// Delays the receiving channels by round(delay * rate) samples, holding the first sample.
WaveformRecord apply_comm_delay(const WaveformRecord& record, double delay_ms);

/// Number of leading samples affected by padding in apply_comm_delay.
std::size_t delay_samples(double sample_rate_hz, double delay_ms);

// ---------------------------------------------------------------------------
// Scenario sets
// ---------------------------------------------------------------------------

enum class ScenarioKind { healthy, internal, external };

std::string_view to_string(ScenarioKind kind);

struct Scenario {
    std::string id;
    ScenarioKind kind = ScenarioKind::healthy;
    ScenarioConfig cfg;
    std::optional<FaultSpec> fault;
};

struct HealthyVariant {
    std::string name;
    std::vector<LoadStep> steps;
};

std::vector<HealthyVariant> default_healthy_variants();

struct GridSpec {
    std::vector<FaultLabel> labels{kFaultClasses.begin(), kFaultClasses.end()};
    std::vector<double> locations{0.2, 0.5, 0.7};
    std::vector<double> r_f{0.1, 50.0, 100.0, 150.0, 250.0};
    std::vector<SourceMode> modes{SourceMode::grid, SourceMode::islanded};
    std::vector<double> snr_db{std::numeric_limits<double>::infinity(), 40.0, 30.0, 20.0};
    std::vector<double> external_locations{0.01, 0.5, 0.99};
    std::vector<ExternalSide> external_sides{ExternalSide::remote, ExternalSide::local};
    double external_r_f = 0.1;
    std::vector<HealthyVariant> healthy = default_healthy_variants();
    double t_f = 0.1;
    ScenarioConfig base;
    std::uint64_t seed = 2024;
};

/// Cartesian grid ordered by mode, SNR, then fault label; each label's internal
/// faults are followed by its external faults, and the healthy variants close
/// each (mode, SNR) block. Seeds derive from the root seed and the scenario id.
std::vector<Scenario> scenario_grid(const GridSpec& spec);

struct TrainingSpec {
    int n_healthy = 60;
    int n_external = 30;
    double load_min = 0.5;
    double load_max = 1.5;
    double step_probability = 0.5;
    ScenarioConfig base;
    std::uint64_t seed = 7;
};

/// Clean healthy and external-fault records with randomized load profiles.
std::vector<Scenario> training_scenarios(const TrainingSpec& spec);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

/// Per-scenario seed fanned out from a root seed by hashing the scenario id.
std::uint64_t derive_seed(std::uint64_t root, std::string_view id);

}  // namespace kldp::sim
