#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "kldp/engine.hpp"
#include "kldp/feedersim.hpp"
#include "kldp/model.hpp"
#include "kldp/waveform.hpp"

namespace kldp::io {

/// Writes `content` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Waveform files: comment lines start with '#', then a header row
// t_s,ia_s,ib_s,ic_s,ia_r,ib_r,ic_r and one row per sample.
std::string waveform_to_csv(const WaveformRecord& record, const std::string& config_hash);
WaveformRecord waveform_from_csv(const std::string& text);
void write_waveform(const std::filesystem::path& path, const WaveformRecord& record, const std::string& config_hash);
WaveformRecord read_waveform(const std::filesystem::path& path);

/// Ground-truth sidecar plus the scenario parameters that produced the record.
struct ScenarioMeta {
    sim::GroundTruth truth;
    std::string kind = "healthy";
    std::string source_mode = "grid";
    std::optional<double> snr_db;
    std::optional<double> r_f;
    std::optional<double> location_frac;
    std::string config_hash;
};

ScenarioMeta scenario_meta(const sim::Scenario& scenario, const sim::GroundTruth& truth, const std::string& config_hash);
std::string meta_to_json(const ScenarioMeta& meta);
ScenarioMeta meta_from_json(const std::string& text);

/// Sidecar path for a waveform file: same stem, `.truth.json` suffix.
std::filesystem::path sidecar_path(const std::filesystem::path& waveform_path);

std::string model_to_json(const HealthyModel& model);
/// Throws ValidationError when fields are missing or thresholds disagree with the stored alphas.
HealthyModel model_from_json(const std::string& text);
void write_model(const std::filesystem::path& path, const HealthyModel& model);
HealthyModel read_model(const std::filesystem::path& path);

/// One row per evaluated window: t_end_s,d_sq,z_a,z_b,z_c,g0,flags,tripped,label.
/// `flags` is four 0/1 characters in the order a, b, c, ground.
std::string event_log_to_csv(const engine::StreamResult& result, const std::string& config_hash);

}  // namespace kldp::io
