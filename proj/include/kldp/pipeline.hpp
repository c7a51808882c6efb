#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kldp/calibrate.hpp"
#include "kldp/engine.hpp"
#include "kldp/evalkit.hpp"
#include "kldp/feedersim.hpp"
#include "kldp/model.hpp"

namespace kldp::pipeline {

struct TuneOptions {
    WindowConfig window;
    calib::AugmentConfig augment{{20.0}, 1};
    calib::OptimizerOptions optimizer;
    ZoneQuantiles zones;
    FitOptions fit;
};

struct TuneResult {
    HealthyModel model;
    calib::BinningTuning tuning;
    std::size_t n_windows = 0;
};

/// Augment, window, search the binning, then fit the healthy model.
TuneResult tune_model(std::span<const WaveformRecord> healthy, const TuneOptions& options);

/// Clean training records from the simulator.
std::vector<WaveformRecord> simulate_training(const sim::TrainingSpec& spec);

struct RunOptions {
    double delay_ms = 0.0;
    engine::StreamOptions stream;
};

struct ScenarioInfo {
    sim::GroundTruth truth;
    std::optional<double> snr_db;
    std::string source_mode;
};

struct RunResult {
    engine::StreamResult stream;
    eval::DetectionOutcome outcome;
};

/// Applies the optional receiving-side delay, runs the engine and tags every window.
RunResult run_record(const WaveformRecord& record, const ScenarioInfo& info, const HealthyModel& model,
                     const RunOptions& options = {});

/// Simulates a scenario and runs it.
RunResult run_scenario(const sim::Scenario& scenario, const HealthyModel& model, const RunOptions& options = {});

/// Runs every scenario, sharding across `jobs` threads; output order follows the input.
std::vector<eval::DetectionOutcome> run_scenarios(std::span<const sim::Scenario> scenarios, const HealthyModel& model,
                                                  const RunOptions& options = {}, int jobs = 1);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace kldp::pipeline
