#include "kldp/model.hpp"

#include <cmath>

#include "kldp/errors.hpp"

namespace kldp {

void AlphaConfig::validate() const {
    for (double a : {det, cls, zero})
        if (!(a > 0.0 && a < 1.0)) throw ValidationError("significance levels must lie in (0, 1)");
}

void VoteConfig::validate() const {
    if (m < 1 || j < 1 || j > m) throw ValidationError("vote requires 1 <= j <= m");
}

Thresholds derive_thresholds(const AlphaConfig& alpha, int k0, double dg_cls, double dg0_cls) {
    alpha.validate();
    if (k0 < 2) throw ValidationError("zero-sequence bin count must be at least 2");
    if (!(dg_cls >= 0.0 && dg0_cls >= 0.0)) throw ValidationError("jump thresholds must be non-negative");
    Thresholds t;
    t.alpha = alpha;
    t.tau_det = stats::chi2_inv_cdf(1.0 - alpha.det, 3);
    t.z_cls = stats::normal_inv_cdf(1.0 - alpha.cls / 2.0);
    t.tau0_cls = stats::chi2_inv_cdf(1.0 - alpha.zero, k0 - 1);
    t.dg_cls = dg_cls;
    t.dg0_cls = dg0_cls;
    return t;
}

HealthyModel fit_healthy_model(std::span<const GVector> healthy, const FitOptions& options, int k0,
                               const WindowConfig& window, const calib::EdgeSet& edges, double rho_sq) {
    if (healthy.size() < 2) throw DegenerateInputError("model fitting needs at least two healthy g-vectors");
    window.validate();
    options.vote.validate();
    for (const auto& e : edges) e.validate();
    if (!(rho_sq >= 0.0 && rho_sq <= 1.0)) throw ValidationError("rho_sq must lie in [0, 1]");

    const double n = static_cast<double>(healthy.size());
    stats::Vec3 mu = stats::Vec3::Zero();
    for (const auto& g : healthy) mu += g.phases();
    mu /= n;
    stats::Mat3 gamma = stats::Mat3::Zero();
    for (const auto& g : healthy) {
        const stats::Vec3 d = g.phases() - mu;
        gamma += d * d.transpose();
    }
    gamma /= (n - 1.0);
    gamma = 0.5 * (gamma + gamma.transpose());

    const double lambda = options.lambda.value_or(1e-6 * gamma.trace() / 3.0);

    HealthyModel model;
    model.line_id = options.line_id;
    model.window = window;
    model.edges = edges;
    model.covariance = stats::CovarianceModel(mu, gamma, lambda);
    for (int p = 0; p < 3; ++p) {
        model.mu_p[p] = mu[p];
        model.sigma_p[p] = std::sqrt(gamma(p, p));
    }
    model.k0 = k0;
    model.thresholds = derive_thresholds(options.alpha, k0, options.dg_cls, options.dg0_cls);
    model.vote = options.vote;
    model.rho_sq = rho_sq;
    return model;
}

}  // namespace kldp
