#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace kldp::stats {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Natural log of the gamma function for x > 0. Throws DomainError otherwise.
double ln_gamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed without cancellation.
double gamma_q(double a, double x);

double chi2_cdf(double x, int dof);
/// Upper tail 1 - F(x), accurate deep into the tail.
double chi2_sf(double x, int dof);
double chi2_pdf(double x, int dof);

/// Quantile of the chi-square law: x with P(dof/2, x/2) = p.
/// Bracketed Newton iteration on the incomplete gamma function; the iteration
/// works on the upper tail when p > 0.5 so that 1 - 1e-8 style probabilities
/// keep their relative precision.
double chi2_inv_cdf(double p, int dof);

double normal_cdf(double z);
/// Standard normal quantile, absolute error below 1e-8 on (0, 1).
double normal_inv_cdf(double p);

// ---------------------------------------------------------------------------
// G-statistic
// ---------------------------------------------------------------------------

struct HistogramCounts {
    std::vector<std::uint32_t> counts;

    HistogramCounts() = default;
    explicit HistogramCounts(std::size_t n_bins) : counts(n_bins, 0) {}
    HistogramCounts(std::initializer_list<std::uint32_t> c) : counts(c) {}

    std::size_t n_bins() const { return counts.size(); }
    std::uint64_t total() const;
};

struct GStatResult {
    double g = 0.0;
    double g_star = 0.0;  // equals g until a Bartlett correction is applied
    int k_eff = 0;        // number of bins populated at either terminal
};

/// Likelihood-ratio statistic between two count vectors over the same bins.
/// Only bins with a positive count at either terminal contribute; 0 ln 0 := 0.
/// Throws ShapeError on a bin-count mismatch and DegenerateInputError when
/// both histograms are empty.
GStatResult g_statistic(const HistogramCounts& sending, const HistogramCounts& receiving);

/// Bartlett small-sample correction for a window of `window_len` samples.
double bartlett_correct(double g, int k_eff, int window_len);

/// g_statistic followed by bartlett_correct; fills g_star.
GStatResult corrected_g_statistic(const HistogramCounts& sending,
                                  const HistogramCounts& receiving, int window_len);

// ---------------------------------------------------------------------------
// Regularized Mahalanobis distance
// ---------------------------------------------------------------------------

/// (gamma + lambda I)^-1 through an LDL^T factorization. Throws ConditioningError
/// when the regularized matrix is not numerically positive definite.
Mat3 regularized_inverse(const Mat3& gamma, double lambda);

/// Healthy-state mean and covariance with the regularized inverse cached.
class CovarianceModel {
public:
    CovarianceModel(const Vec3& mu, const Mat3& gamma, double lambda);

    const Vec3& mu() const { return mu_; }
    const Mat3& gamma() const { return gamma_; }
    double lambda() const { return lambda_; }
    const Mat3& gamma_lambda_inv() const { return inv_; }

private:
    Vec3 mu_;
    Mat3 gamma_;
    double lambda_;
    Mat3 inv_;
};

double mahalanobis_sq(const Vec3& g, const CovarianceModel& model);

// ---------------------------------------------------------------------------
// Q-Q alignment
// ---------------------------------------------------------------------------

/// Chi-square quantiles at plotting positions (i - 0.5) / n, i = 1..n.
std::vector<double> chi2_plotting_quantiles(std::size_t n, int dof);

/// Pearson correlation of the samples, taken in the order given, against the
/// ascending chi-square plotting quantiles. Callers sort first for a Q-Q fit;
/// a descending sample vector therefore scores -1.
double qq_correlation(std::span<const double> samples, int dof);

/// Same, with the reference quantiles precomputed (must have samples.size() entries).
double qq_correlation(std::span<const double> samples, std::span<const double> quantiles);

}  // namespace kldp::stats
