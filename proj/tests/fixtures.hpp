#pragma once

// Shared, lazily built test fixtures.

#include "kldp/pipeline.hpp"

namespace fixture {

/// Small but complete model tuned on clean simulated training records.
inline const kldp::HealthyModel& small_model() {
    static const kldp::HealthyModel model = [] {
        kldp::sim::TrainingSpec spec;
        spec.n_healthy = 20;
        spec.n_external = 10;
        const auto records = kldp::pipeline::simulate_training(spec);
        kldp::pipeline::TuneOptions opt;
        opt.optimizer.budget = 12;
        return kldp::pipeline::tune_model(records, opt).model;
    }();
    return model;
}

/// Hand-built model: identity covariance around zero, unit per-phase spread.
inline kldp::HealthyModel unit_model(int k0 = 10) {
    kldp::HealthyModel m;
    m.covariance = kldp::stats::CovarianceModel(kldp::stats::Vec3::Zero(), kldp::stats::Mat3::Identity(), 0.0);
    m.mu_p = {0.0, 0.0, 0.0};
    m.sigma_p = {1.0, 1.0, 1.0};
    m.k0 = k0;
    m.thresholds = kldp::derive_thresholds(kldp::AlphaConfig{}, k0);
    return m;
}

}  // namespace fixture
