#include "kldp/pipeline.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "kldp/errors.hpp"

namespace kldp::pipeline {

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

TuneResult tune_model(std::span<const WaveformRecord> healthy, const TuneOptions& options) {
    const auto data = calib::prepare_healthy_dataset(healthy, options.window, options.augment);
    TuneResult out;
    out.n_windows = data.windows.size();
    out.tuning = calib::optimize_binning(data, options.optimizer, options.zones);
    const auto& t = out.tuning;
    const calib::EdgeSet edges{t.phases.phases[0].edges, t.phases.phases[1].edges, t.phases.phases[2].edges,
                               t.zero.edges};
    const auto gv = calib::healthy_gvectors(data, edges);
    out.model = fit_healthy_model(gv, options.fit, t.zero_spec.k, options.window, edges, t.phases.objective);
    out.model.phase_binning = t.phase_spec;
    out.model.zero_binning = t.zero_spec;
    return out;
}

std::vector<WaveformRecord> simulate_training(const sim::TrainingSpec& spec) {
    const auto scenarios = sim::training_scenarios(spec);
    std::vector<WaveformRecord> out;
    out.reserve(scenarios.size());
    for (const auto& s : scenarios) out.push_back(sim::simulate_scenario(s.cfg, s.fault, s.id).record);
    return out;
}

RunResult run_record(const WaveformRecord& record, const ScenarioInfo& info, const HealthyModel& model,
                     const RunOptions& options) {
    RunResult out;
    engine::StreamOptions stream = options.stream;
    if (options.delay_ms > 0.0) {
        stream.valid_from_sample = std::max(stream.valid_from_sample,
                                            sim::delay_samples(record.sample_rate_hz, options.delay_ms));
        out.stream = engine::run_stream(sim::apply_comm_delay(record, options.delay_ms), model, stream);
    } else {
        out.stream = engine::run_stream(record, model, stream);
    }

    auto& o = out.outcome;
    o.scenario_id = info.truth.scenario_id;
    o.tripped = out.stream.detection.has_value();
    if (out.stream.detection) o.t_detect = out.stream.detection->t_detect;
    o.t_f = info.truth.t_f;
    o.predicted = out.stream.label;
    o.truth = info.truth.label;
    o.internal = info.truth.internal;
    o.snr_db = info.snr_db;
    o.source_mode = info.source_mode;
    o.tau_det = model.thresholds.tau_det;
    for (const auto& w : out.stream.windows) {
        o.window_t_end.push_back(w.t_end);
        o.window_d_sq.push_back(w.d_sq);
        o.window_faulty.push_back(info.truth.window_faulty(w.t_end));
    }
    return out;
}

RunResult run_scenario(const sim::Scenario& scenario, const HealthyModel& model, const RunOptions& options) {
    const auto sim_out = sim::simulate_scenario(scenario.cfg, scenario.fault, scenario.id);
    ScenarioInfo info;
    info.truth = sim_out.truth;
    if (scenario.cfg.snr_db && std::isfinite(*scenario.cfg.snr_db)) info.snr_db = scenario.cfg.snr_db;
    info.source_mode = std::string(sim::to_string(scenario.cfg.source_mode));
    return run_record(sim_out.record, info, model, options);
}

std::vector<eval::DetectionOutcome> run_scenarios(std::span<const sim::Scenario> scenarios, const HealthyModel& model,
                                                  const RunOptions& options, int jobs) {
    std::vector<eval::DetectionOutcome> out(scenarios.size());
    parallel_for(scenarios.size(), jobs,
                 [&](std::size_t i) { out[i] = run_scenario(scenarios[i], model, options).outcome; });
    return out;
}

}  // namespace kldp::pipeline
