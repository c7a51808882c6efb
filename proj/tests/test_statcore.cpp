#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kldp/errors.hpp"
#include "kldp/statcore.hpp"
#include "oracles.hpp"

using namespace kldp;
using namespace kldp::stats;

TEST_CASE("ln_gamma reference values") {
    CHECK(std::abs(ln_gamma(1.0)) <= 1e-10);
    CHECK(std::abs(ln_gamma(0.5) - 0.5 * std::log(std::numbers::pi)) <= 1e-10);
    CHECK(std::abs(ln_gamma(0.5) - 0.5723649429) <= 1e-10);

    // ln(9!) from the exact integer factorial.
    long long fact = 1;
    for (int i = 2; i <= 9; ++i) fact *= i;
    CHECK(std::abs(ln_gamma(10.0) - std::log(static_cast<double>(fact))) <= 1e-10);
    CHECK(std::abs(ln_gamma(10.0) - 12.8018274801) <= 1e-10);
}

TEST_CASE("ln_gamma tracks the recurrence and std::lgamma across its range") {
    for (double x = 0.5; x < 1e6; x *= 1.37) {
        const double ours = ln_gamma(x);
        // absolute accuracy where doubles can carry it, relative beyond
        const double tol = std::max(1e-10, 4e-15 * std::abs(ours));
        CHECK(std::abs(ours - std::lgamma(x)) <= tol);
        CHECK(std::abs(ln_gamma(x + 1.0) - ln_gamma(x) - std::log(x)) <= tol);
    }
}

TEST_CASE("ln_gamma rejects non-positive arguments") {
    CHECK_THROWS_AS(ln_gamma(0.0), DomainError);
    CHECK_THROWS_AS(ln_gamma(-2.5), DomainError);
}

TEST_CASE("chi2_inv_cdf reproduces the published detection thresholds") {
    CHECK(std::abs(chi2_inv_cdf(1.0 - 1e-8, 3) - 40.13) <= 0.02);
    CHECK(std::abs(chi2_inv_cdf(1.0 - 1e-8, 8) - 53.20) <= 0.05);
    CHECK(std::abs(chi2_inv_cdf(0.5, 2) - 2.0 * std::log(2.0)) <= 1.38629436 * 1e-8);
}

TEST_CASE("chi2_inv_cdf inverts an independent closed-form CDF") {
    const double probs[] = {1e-8, 1e-4, 0.01, 0.5, 0.99, 1.0 - 1e-6};
    for (int dof = 1; dof <= 30; ++dof) {
        for (double p : probs) {
            const double x = chi2_inv_cdf(p, dof);
            CAPTURE(dof);
            CAPTURE(p);
            CHECK(std::abs(oracle::chi2_cdf_closed_form(x, dof) - p) <= 1e-7);
            // relative accuracy in the upper tail, checked on the tail probability itself
            if (p > 0.5) {
                CHECK(std::abs(oracle::chi2_sf_closed_form(x, dof) / (1.0 - p) - 1.0) <= 1e-6);
            }
        }
    }
}

TEST_CASE("chi2_inv_cdf domain errors") {
    CHECK_THROWS_AS(chi2_inv_cdf(0.0, 3), DomainError);
    CHECK_THROWS_AS(chi2_inv_cdf(1.0, 3), DomainError);
    CHECK_THROWS_AS(chi2_inv_cdf(-0.1, 3), DomainError);
    CHECK_THROWS_AS(chi2_inv_cdf(0.5, 0), DomainError);
}

TEST_CASE("normal_inv_cdf") {
    CHECK(normal_inv_cdf(0.5) == 0.0);
    CHECK(std::abs(normal_inv_cdf(1.0 - 5e-9) - 5.73) <= 0.01);

    const double bisected = oracle::normal_quantile_by_bisection(0.975);
    CHECK(std::abs(bisected - 1.95996398) <= 1e-8);
    CHECK(std::abs(normal_inv_cdf(0.975) - bisected) <= 1e-8);

    for (double p : {1e-6, 0.01, 0.2, 0.7, 0.999}) {
        CHECK(std::abs(normal_inv_cdf(p) + normal_inv_cdf(1.0 - p)) <= 1e-8);
        CHECK(std::abs(normal_cdf(normal_inv_cdf(p)) / p - 1.0) <= 1e-9);
    }
    for (double p : {0.05, 0.3, 0.6, 0.9}) {
        CHECK(std::abs(normal_inv_cdf(p) - oracle::normal_quantile_by_bisection(p)) <= 1e-8);
    }
    CHECK_THROWS_AS(normal_inv_cdf(0.0), DomainError);
    CHECK_THROWS_AS(normal_inv_cdf(1.0), DomainError);
}

TEST_CASE("g_statistic examples") {
    auto same = g_statistic({10, 10}, {10, 10});
    CHECK(same.g == 0.0);
    CHECK(same.k_eff == 2);

    auto shifted = g_statistic({12, 8}, {8, 12});
    CHECK(std::abs(shifted.g - 4.0 * (12 * std::log(1.2) + 8 * std::log(0.8))) <= 1e-12);
    CHECK(std::abs(shifted.g - 1.61084) <= 1e-4);
    CHECK(shifted.k_eff == 2);

    auto disjoint = g_statistic({20, 0}, {0, 20});
    CHECK(std::abs(disjoint.g - 2.0 * (40.0 * std::log(2.0))) <= 1e-9);
    CHECK(std::abs(disjoint.g - 55.452) <= 1e-3);
    CHECK(disjoint.k_eff == 2);

    // Empty bins are not counted as populated.
    CHECK(g_statistic({5, 0, 5}, {5, 0, 5}).k_eff == 2);
}

TEST_CASE("g_statistic errors") {
    CHECK_THROWS_AS(g_statistic({0, 0, 0}, {0, 0, 0}), DegenerateInputError);
    CHECK_THROWS_AS(g_statistic({1, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("g_statistic properties over random count vectors") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> bins(1, 30);
    std::uniform_int_distribution<std::uint32_t> count(0, 40);
    std::uniform_int_distribution<std::uint32_t> mult(1, 9);
    for (int trial = 0; trial < 500; ++trial) {
        const int k = bins(rng);
        HistogramCounts s(k), r(k);
        for (int i = 0; i < k; ++i) {
            s.counts[i] = count(rng);
            r.counts[i] = count(rng);
        }
        if (s.total() + r.total() == 0) continue;
        const auto a = g_statistic(s, r);
        const auto b = g_statistic(r, s);
        CHECK(a.g == doctest::Approx(b.g).epsilon(1e-12));
        CHECK(a.g >= 0.0);
        CHECK(a.k_eff <= k);
        CHECK(g_statistic(s, s).g == 0.0);
        if (s.counts != r.counts) CHECK(a.g > 0.0);

        const std::uint32_t m = mult(rng);
        HistogramCounts sm = s, rm = r;
        for (auto& c : sm.counts) c *= m;
        for (auto& c : rm.counts) c *= m;
        CHECK(g_statistic(sm, rm).g == doctest::Approx(m * a.g).epsilon(1e-10));
    }
}

TEST_CASE("bartlett_correct") {
    CHECK(std::abs(bartlett_correct(10.0, 19, 200) - 10.0 / (1.0 + 20.0 / 2394.0)) <= 1e-12);
    CHECK(std::abs(bartlett_correct(10.0, 19, 200) - 9.91715) <= 1e-4);
    CHECK(bartlett_correct(0.0, 7, 50) == 0.0);
    CHECK(bartlett_correct(5.0, 5, 1) == doctest::Approx(2.5));
    CHECK(bartlett_correct(12.0, 16, 200) <= 12.0);
    CHECK_THROWS_AS(bartlett_correct(1.0, 3, 0), DomainError);
}

TEST_CASE("regularized_inverse examples") {
    const Mat3 a = regularized_inverse(Mat3::Identity(), 0.1);
    CHECK((a - Mat3::Identity() / 1.1).cwiseAbs().maxCoeff() <= 1e-14);

    CHECK((regularized_inverse(Mat3::Zero(), 1.0) - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-14);

    const Mat3 d = Eigen::Vector3d(2.0, 3.0, 4.0).asDiagonal();
    const Mat3 di = regularized_inverse(d, 0.0);
    CHECK(di(0, 0) == doctest::Approx(0.5));
    CHECK(di(1, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(di(2, 2) == doctest::Approx(0.25));
}

TEST_CASE("regularized_inverse rejects singular and asymmetric input") {
    Mat3 rank1 = Eigen::Vector3d(1, 2, 3) * Eigen::Vector3d(1, 2, 3).transpose();
    CHECK_THROWS_AS(regularized_inverse(rank1, 0.0), ConditioningError);
    CHECK_NOTHROW(regularized_inverse(rank1, 1e-3));
    CHECK_THROWS_AS(regularized_inverse(Mat3::Zero(), 0.0), ConditioningError);
    Mat3 asym = Mat3::Identity();
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(regularized_inverse(asym, 0.0), DomainError);
}

TEST_CASE("mahalanobis_sq examples") {
    CovarianceModel euclid(Vec3::Zero(), Mat3::Identity(), 0.0);
    CHECK(mahalanobis_sq(Vec3(1, 2, 2), euclid) == doctest::Approx(9.0));
    CHECK(mahalanobis_sq(Vec3::Zero(), euclid) == 0.0);

    CovarianceModel reg(Vec3::Zero(), Mat3::Identity(), 0.1);
    CHECK(std::abs(mahalanobis_sq(Vec3(1, 1, 1), reg) - 3.0 / 1.1) <= 1e-9);

    CovarianceModel shifted(Vec3(4, 5, 6), Mat3::Identity() * 2.0, 0.0);
    CHECK(mahalanobis_sq(Vec3(4, 5, 6), shifted) == 0.0);
}

TEST_CASE("mahalanobis_sq is invariant to a joint orthonormal change of basis") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 50; ++trial) {
        Mat3 a;
        for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = n01(rng);
        const Mat3 gamma = a * a.transpose() + 0.5 * Mat3::Identity();
        Mat3 raw;
        for (int i = 0; i < 9; ++i) raw(i / 3, i % 3) = n01(rng);
        const Mat3 q = Eigen::HouseholderQR<Mat3>(raw).householderQ();
        const Vec3 mu(n01(rng), n01(rng), n01(rng));
        const Vec3 g(n01(rng), n01(rng), n01(rng));

        const CovarianceModel base(mu, gamma, 0.0);
        const Mat3 rotated = q * gamma * q.transpose();
        const CovarianceModel turned(q * mu, 0.5 * (rotated + rotated.transpose()), 0.0);
        CHECK(mahalanobis_sq(q * g, turned) == doctest::Approx(mahalanobis_sq(g, base)).epsilon(1e-9));
    }
}

TEST_CASE("qq_correlation") {
    const int dof = 6;
    const auto q = chi2_plotting_quantiles(50, dof);
    CHECK(qq_correlation(q, dof) == doctest::Approx(1.0).epsilon(1e-12));

    // Anti-aligned: the reflected quantile vector correlates at exactly -1. Plain
    // reversal of a skewed quantile vector is only partly anti-aligned.
    std::vector<double> mirrored;
    for (double v : q) mirrored.push_back(100.0 - v);
    CHECK(qq_correlation(mirrored, dof) == doctest::Approx(-1.0).epsilon(1e-12));
    std::vector<double> reversed(q.rbegin(), q.rend());
    const double rev = qq_correlation(reversed, dof);
    CHECK(rev < -0.8);
    CHECK(rev > -1.0);

    std::mt19937_64 rng(2024);
    std::chi_squared_distribution<double> chi5(5.0);
    std::vector<double> draws(10000);
    for (auto& d : draws) d = chi5(rng);
    std::sort(draws.begin(), draws.end());
    const double rho = qq_correlation(draws, 5);
    CHECK(rho * rho >= 0.99);

    CHECK_THROWS_AS(qq_correlation(std::vector<double>{1.0, 1.0, 1.0, 1.0}, 3), DegenerateInputError);
    CHECK_THROWS_AS(qq_correlation(std::vector<double>{1.0, 2.0}, 3), DegenerateInputError);
}

TEST_CASE("Bartlett-corrected g under the null tracks chi-square with k_eff - 1 dof") {
    constexpr int L = 200;
    std::vector<double> probs(16, 1.0 / 16.0);
    std::mt19937_64 rng(99);
    std::vector<double> gstar;
    std::vector<int> keff;
    for (int t = 0; t < 10000; ++t) {
        HistogramCounts s, r;
        s.counts = oracle::multinomial(rng, L, probs);
        r.counts = oracle::multinomial(rng, L, probs);
        const auto res = corrected_g_statistic(s, r, L);
        gstar.push_back(res.g_star);
        keff.push_back(res.k_eff);
    }
    std::sort(gstar.begin(), gstar.end());
    const int modal = 16;
    CHECK(std::count(keff.begin(), keff.end(), modal) > 9900);
    const double rho = qq_correlation(gstar, modal - 1);
    CHECK(rho * rho >= 0.95);
}
