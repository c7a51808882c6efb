#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "kldp/calibrate.hpp"
#include "kldp/statcore.hpp"

namespace kldp {

struct AlphaConfig {
    double det = 1e-8;
    double cls = 1e-8;
    double zero = 1e-8;

    void validate() const;
};

struct Thresholds {
    double tau_det = 0.0;
    double z_cls = 0.0;
    double tau0_cls = 0.0;
    double dg_cls = 5.0;
    double dg0_cls = 5.0;
    AlphaConfig alpha;
};

/// Quantile-derived thresholds: tau_det from chi2(3), z_cls from the two-sided
/// normal quantile, tau0_cls from chi2(k0 - 1).
Thresholds derive_thresholds(const AlphaConfig& alpha, int k0, double dg_cls = 5.0, double dg0_cls = 5.0);

struct VoteConfig {
    int j = 2;
    int m = 3;

    void validate() const;
};

/// Calibrated healthy-state artifact for one protected line.
struct HealthyModel {
    static constexpr int kSchemaVersion = 1;

    std::string line_id = "line";
    WindowConfig window;
    calib::EdgeSet edges;  // a, b, c, zero
    stats::CovarianceModel covariance{stats::Vec3::Zero(), stats::Mat3::Identity(), 0.0};
    std::array<double, 3> mu_p{};
    std::array<double, 3> sigma_p{};
    int k0 = 2;
    Thresholds thresholds;
    VoteConfig vote;
    double rho_sq = 0.0;

    // Provenance; not needed online.
    std::optional<BinningSpec> phase_binning;
    std::optional<BinningSpec> zero_binning;
    std::string config_hash;
};

struct FitOptions {
    AlphaConfig alpha;
    std::optional<double> lambda;  // default 1e-6 * trace(gamma) / 3
    double dg_cls = 5.0;
    double dg0_cls = 5.0;
    VoteConfig vote;
    std::string line_id = "line";
};

/// Sample mean and (n - 1) covariance of the healthy g-vectors plus thresholds.
HealthyModel fit_healthy_model(std::span<const GVector> healthy, const FitOptions& options, int k0,
                               const WindowConfig& window, const calib::EdgeSet& edges, double rho_sq);

}  // namespace kldp
