#include "kldp/statcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "kldp/errors.hpp"

namespace kldp::stats {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxIter = 200000;

// Stirling series, used for x >= 10 where truncation error is below 1e-16.
double ln_gamma_stirling(double x) {
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = 1.0 / 156.0;
    series = series * inv2 - 691.0 / 360360.0;
    series = series * inv2 + 1.0 / 1188.0;
    series = series * inv2 - 1.0 / 1680.0;
    series = series * inv2 + 1.0 / 1260.0;
    series = series * inv2 - 1.0 / 360.0;
    series = series * inv2 + 1.0 / 12.0;
    series *= inv;
    return (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * std::numbers::pi) + series;
}

// Series expansion of P(a, x); converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - ln_gamma(a));
}

// Modified Lentz continued fraction for Q(a, x); used for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - ln_gamma(a)) * h;
}

void check_gamma_args(double a, double x) {
    if (!(a > 0.0)) throw DomainError("incomplete gamma: shape must be positive");
    if (!(x >= 0.0)) throw DomainError("incomplete gamma: x must be non-negative");
}

void check_probability(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError(std::string(what) + ": probability must lie in (0, 1), got " +
                          std::to_string(p));
    }
}

// Acklam's rational approximation, relative error ~1e-9 before refinement.
double normal_inv_acklam(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace

double ln_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("ln_gamma: x must be positive and finite");
    if (x >= 10.0) return ln_gamma_stirling(x);
    // Shift into the Stirling range: Gamma(x) = Gamma(x + n) / (x (x+1) ... (x+n-1)).
    double shifted = x;
    double product = 1.0;
    while (shifted < 10.0) {
        product *= shifted;
        shifted += 1.0;
    }
    return ln_gamma_stirling(shifted) - std::log(product);
}

double gamma_p(double a, double x) {
    check_gamma_args(a, x);
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
    check_gamma_args(a, x);
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_fraction(a, x);
}

double chi2_cdf(double x, int dof) {
    if (dof < 1) throw DomainError("chi2_cdf: dof must be >= 1");
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_sf(double x, int dof) {
    if (dof < 1) throw DomainError("chi2_sf: dof must be >= 1");
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * x);
}

double chi2_pdf(double x, int dof) {
    if (dof < 1) throw DomainError("chi2_pdf: dof must be >= 1");
    if (x < 0.0) return 0.0;
    const double a = 0.5 * dof;
    if (x == 0.0) return dof == 2 ? 0.5 : (dof < 2 ? std::numeric_limits<double>::infinity() : 0.0);
    return 0.5 * std::exp((a - 1.0) * std::log(0.5 * x) - 0.5 * x - ln_gamma(a));
}

double chi2_inv_cdf(double p, int dof) {
    check_probability(p, "chi2_inv_cdf");
    if (dof < 1) throw DomainError("chi2_inv_cdf: dof must be >= 1");

    const bool upper = p > 0.5;
    const double q = 1.0 - p;
    // Increasing residual in x whose root is the quantile.
    auto residual = [&](double x) { return upper ? q - chi2_sf(x, dof) : chi2_cdf(x, dof) - p; };

    // Wilson-Hilferty starting point.
    const double k = dof;
    const double z = normal_inv_cdf(p);
    const double wh = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    double x = k * wh * wh * wh;
    if (!(x > 0.0)) x = std::pow(p * std::exp(ln_gamma(0.5 * k + 1.0)), 2.0 / k) * 2.0;
    if (!(x > 0.0)) x = std::numeric_limits<double>::min();

    double lo = 0.0;
    double hi = std::max(x, 1.0);
    while (residual(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) throw DomainError("chi2_inv_cdf: failed to bracket quantile");
    }

    for (int it = 0; it < 500; ++it) {
        const double f = residual(x);
        if (f == 0.0) return x;
        if (f < 0.0) lo = std::max(lo, x); else hi = std::min(hi, x);

        const double pdf = chi2_pdf(x, dof);
        double next = (pdf > 0.0 && std::isfinite(pdf)) ? x - f / pdf : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - x);
        x = next;
        if (step <= 4.0 * kEps * x || hi - lo <= 4.0 * kEps * hi) break;
    }
    return x;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_inv_cdf(double p) {
    check_probability(p, "normal_inv_cdf");
    if (p == 0.5) return 0.0;
    // Refine in the lower tail, where erfc keeps full relative precision.
    if (p > 0.5) return -normal_inv_cdf(1.0 - p);

    double x = normal_inv_acklam(p);
    for (int i = 0; i < 2; ++i) {
        const double e = normal_cdf(x) - p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

std::uint64_t HistogramCounts::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

GStatResult g_statistic(const HistogramCounts& sending, const HistogramCounts& receiving) {
    if (sending.n_bins() != receiving.n_bins()) {
        throw ShapeError("g_statistic: histograms have different bin counts");
    }
    GStatResult out;
    double sum = 0.0;
    for (std::size_t i = 0; i < sending.n_bins(); ++i) {
        const double ns = sending.counts[i];
        const double nr = receiving.counts[i];
        if (ns + nr <= 0.0) continue;
        ++out.k_eff;
        const double e = 0.5 * (ns + nr);
        if (ns > 0.0) sum += ns * std::log(ns / e);
        if (nr > 0.0) sum += nr * std::log(nr / e);
    }
    if (out.k_eff == 0) throw DegenerateInputError("g_statistic: both histograms are empty");
    // Each bin's contribution is non-negative in exact arithmetic; clamp rounding noise.
    out.g = std::max(0.0, 2.0 * sum);
    out.g_star = out.g;
    return out;
}

double bartlett_correct(double g, int k_eff, int window_len) {
    if (window_len < 1) throw DomainError("bartlett_correct: window length must be >= 1");
    if (g < 0.0) throw DomainError("bartlett_correct: g must be non-negative");
    const double factor = 1.0 + (k_eff + 1.0) / (6.0 * (2.0 * window_len - 1.0));
    return g / factor;
}

GStatResult corrected_g_statistic(const HistogramCounts& sending,
                                  const HistogramCounts& receiving, int window_len) {
    GStatResult out = g_statistic(sending, receiving);
    out.g_star = bartlett_correct(out.g, out.k_eff, window_len);
    return out;
}

Mat3 regularized_inverse(const Mat3& gamma, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw DomainError("regularized_inverse: lambda must be finite and non-negative");
    }
    const double scale = std::max(gamma.cwiseAbs().maxCoeff(), lambda);
    if ((gamma - gamma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0)) {
        throw DomainError("regularized_inverse: matrix is not symmetric");
    }
    const Mat3 a = gamma + lambda * Mat3::Identity();
    const Eigen::LDLT<Mat3> ldlt(a);
    const auto diag = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(scale > 0.0) ||
        diag.minCoeff() <= 1e-13 * scale) {
        throw ConditioningError("regularized_inverse: gamma + lambda I is not positive definite");
    }
    Mat3 inv = ldlt.solve(Mat3::Identity());
    inv = 0.5 * (inv + inv.transpose()).eval();
    const double residual = (a * inv - Mat3::Identity()).cwiseAbs().rowwise().sum().maxCoeff();
    if (!(residual <= 1e-9)) {
        throw ConditioningError("regularized_inverse: residual " + std::to_string(residual) +
                                " exceeds 1e-9");
    }
    return inv;
}

CovarianceModel::CovarianceModel(const Vec3& mu, const Mat3& gamma, double lambda)
    : mu_(mu), gamma_(gamma), lambda_(lambda), inv_(regularized_inverse(gamma, lambda)) {}

double mahalanobis_sq(const Vec3& g, const CovarianceModel& model) {
    const Vec3 d = g - model.mu();
    return std::max(0.0, d.dot(model.gamma_lambda_inv() * d));
}

std::vector<double> chi2_plotting_quantiles(std::size_t n, int dof) {
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = chi2_inv_cdf((static_cast<double>(i) + 0.5) / static_cast<double>(n), dof);
    }
    return q;
}

double qq_correlation(std::span<const double> samples, std::span<const double> quantiles) {
    const std::size_t n = samples.size();
    if (n < 3) throw DegenerateInputError("qq_correlation: need at least 3 samples");
    if (quantiles.size() != n) throw ShapeError("qq_correlation: quantile count mismatch");

    const double mean_s = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    const double mean_q = std::accumulate(quantiles.begin(), quantiles.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = samples[i] - mean_s;
        const double dy = quantiles[i] - mean_q;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw DegenerateInputError("qq_correlation: samples are constant");
    if (!(syy > 0.0)) throw DegenerateInputError("qq_correlation: reference quantiles are constant");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double qq_correlation(std::span<const double> samples, int dof) {
    if (samples.size() < 3) throw DegenerateInputError("qq_correlation: need at least 3 samples");
    if (dof < 1) throw DomainError("qq_correlation: dof must be >= 1");
    const auto q = chi2_plotting_quantiles(samples.size(), dof);
    return qq_correlation(samples, std::span<const double>(q));
}

}  // namespace kldp::stats
