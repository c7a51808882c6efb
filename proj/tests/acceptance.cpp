// Acceptance checks 1-10. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kldp/calibrate.hpp"
#include "kldp/evalkit.hpp"
#include "kldp/feedersim.hpp"
#include "kldp/model.hpp"
#include "kldp/pipeline.hpp"
#include "kldp/statcore.hpp"
#include "oracles.hpp"

using namespace kldp;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

void threshold_reproduction() {
    const auto t0 = Clock::now();
    const double tau = stats::chi2_inv_cdf(1.0 - 1e-8, 3);
    const double z = stats::normal_inv_cdf(1.0 - 5e-9);
    const double ms = 1e3 * seconds_since(t0);
    const bool ok = std::abs(tau - 40.13) <= 0.02 && std::abs(z - 5.73) <= 0.01 && ms < 1.0;
    report(1, "threshold reproduction", ok, fmt("tau_det=%.4f z_cls=%.4f in %.3f ms", tau, z, ms));
}

void zero_sequence_thresholds() {
    const std::pair<int, double> rows[] = {{9, 53.20}, {14, 64.00}, {15, 66.03}, {18, 71.94}, {20, 75.73}};
    bool ok = true;
    std::string detail;
    for (const auto& [k0, expect] : rows) {
        const double got = stats::chi2_inv_cdf(1.0 - 1e-8, k0 - 1);
        ok = ok && std::abs(got - expect) <= 0.05;
        detail += fmt("K0=%d:%.2f ", k0, got);
    }
    // Rows that cannot all hold for a quantile depending only on K0 and alpha.
    detail += fmt("| not matched: K0=15 also listed as 50.8, K0=8 as 50.01 and 50.81 (computed %.2f, %.2f)",
                  stats::chi2_inv_cdf(1.0 - 1e-8, 14), stats::chi2_inv_cdf(1.0 - 1e-8, 7));
    report(2, "zero-sequence threshold table", ok, detail);
}

void null_calibration() {
    const auto t0 = Clock::now();
    constexpr int kPairs = 10000, kLen = 200, kBins = 16;
    const std::vector<double> probs(kBins, 1.0 / kBins);
    std::mt19937_64 rng(20240601);
    std::vector<double> raw, corrected;
    raw.reserve(kPairs);
    corrected.reserve(kPairs);
    int k_min = kBins, k_max = 0;
    for (int i = 0; i < kPairs; ++i) {
        stats::HistogramCounts s, r;
        s.counts = oracle::multinomial(rng, kLen, probs);
        r.counts = oracle::multinomial(rng, kLen, probs);
        const auto res = stats::corrected_g_statistic(s, r, kLen);
        raw.push_back(res.g);
        corrected.push_back(res.g_star);
        k_min = std::min(k_min, res.k_eff);
        k_max = std::max(k_max, res.k_eff);
    }
    std::sort(raw.begin(), raw.end());
    std::sort(corrected.begin(), corrected.end());
    const double rho_c = stats::qq_correlation(corrected, kBins - 1);
    const double rho_r = stats::qq_correlation(raw, kBins - 1);
    const double r2c = rho_c * rho_c, r2r = rho_r * rho_r;
    double mean_c = 0.0, mean_r = 0.0;
    for (int i = 0; i < kPairs; ++i) {
        mean_c += corrected[i] / kPairs;
        mean_r += raw[i] / kPairs;
    }
    const double secs = seconds_since(t0);
    // Equality up to rounding is not "strictly lower".
    const bool lower = r2r < r2c - 1e-12;
    const bool ok = r2c >= 0.95 && lower && secs < 30.0;
    report(3, "null calibration", ok,
           fmt("rho2(g*)=%.6f rho2(g)=%.6f strictly lower: %s; k_eff in [%d,%d]; mean g*=%.3f g=%.3f (chi2_15 mean 15); %.2f s",
               r2c, r2r, lower ? "yes" : "no", k_min, k_max, mean_c, mean_r, secs));
}

// Smallest k with P(X <= k) >= p for X ~ Binomial(n, q).
long binomial_quantile(long n, double q, double p) {
    double cdf = 0.0;
    for (long k = 0; k <= n; ++k) {
        cdf += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(q) +
                        (n - k) * std::log1p(-q));
        if (cdf >= p) return k;
    }
    return n;
}

void far_control() {
    const auto t0 = Clock::now();
    constexpr long kWindows = 100000;
    constexpr double kAlpha = 1e-3;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    stats::Mat3 a;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = nd(rng);
    const stats::Mat3 gamma = a * a.transpose() + 0.5 * stats::Mat3::Identity();
    const stats::Vec3 mu(16.9, 16.6, 16.6);
    const stats::CovarianceModel cov(mu, gamma, 0.0);
    const double tau = derive_thresholds(AlphaConfig{kAlpha, kAlpha, kAlpha}, 10).tau_det;
    const Eigen::LLT<stats::Mat3> llt(gamma);
    const stats::Mat3 l = llt.matrixL();
    long flagged = 0;
    for (long w = 0; w < kWindows; ++w) {
        const stats::Vec3 e(nd(rng), nd(rng), nd(rng));
        if (stats::mahalanobis_sq(mu + l * e, cov) > tau) ++flagged;
    }
    const long lo = binomial_quantile(kWindows, kAlpha, 0.005);
    const long hi = binomial_quantile(kWindows, kAlpha, 0.995);
    const double secs = seconds_since(t0);
    const bool ok = flagged >= lo && flagged <= hi && secs < 10.0;
    report(4, "FAR control", ok,
           fmt("%ld of %ld windows above tau=%.4f (FAR %.2e), 99%% interval [%ld, %ld]; %.2f s", flagged, kWindows, tau,
               static_cast<double>(flagged) / kWindows, lo, hi, secs));
}

// ---------------------------------------------------------------------------
// End-to-end checks share one model tuned with the default pipeline.

struct Shared {
    HealthyModel model;
    double tune_seconds = 0.0;
};

Shared tune_default() {
    const auto t0 = Clock::now();
    const auto records = pipeline::simulate_training(sim::TrainingSpec{});
    Shared s;
    s.model = pipeline::tune_model(records, pipeline::TuneOptions{}).model;
    s.tune_seconds = seconds_since(t0);
    return s;
}

std::vector<eval::DetectionOutcome> run_grid(const HealthyModel& model, double snr_db) {
    sim::GridSpec g;
    g.snr_db = {snr_db};
    const auto scenarios = sim::scenario_grid(g);
    return pipeline::run_scenarios(scenarios, model);
}

bool siblings(FaultLabel a, FaultLabel b) {
    const PhaseSet x = involvement(a), y = involvement(b);
    return x.a == y.a && x.b == y.b && x.c == y.c && x.ground != y.ground;
}

void clean_detection(const Shared& s, const std::vector<eval::DetectionOutcome>& clean, double secs) {
    const auto m = eval::detection_metrics(clean);
    std::size_t healthy = 0, healthy_trips = 0;
    for (const auto& o : clean)
        if (!o.truth) {
            ++healthy;
            healthy_trips += o.tripped;
        }
    const bool ok = clean.size() >= 400 && m.p_d >= 0.95 && m.mean_t_d_ms <= 25.0 && healthy_trips == 0 &&
                    s.tune_seconds + secs < 300.0;
    report(5, "clean detection", ok,
           fmt("%zu scenarios, P_D=%.2f%% (%zu/%zu), mean T_D=%.2f ms, healthy trips %zu/%zu, external trips %zu; "
               "tune %.1f s + run %.1f s",
               clean.size(), 100.0 * m.p_d, m.n_detected, m.n_fault_scenarios, m.mean_t_d_ms, healthy_trips, healthy,
               m.n_non_fault_trips - healthy_trips, s.tune_seconds, secs));
}

void noisy_detection(const std::vector<eval::DetectionOutcome>& noisy, double secs) {
    const auto m = eval::detection_metrics(noisy);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& o : noisy) {
        scores.insert(scores.end(), o.window_d_sq.begin(), o.window_d_sq.end());
        labels.insert(labels.end(), o.window_faulty.begin(), o.window_faulty.end());
    }
    const auto roc = eval::roc_curve(scores, labels);
    const bool ok = m.p_d >= 0.90 && roc.auc >= 0.95 && secs < 300.0;
    report(6, "20 dB detection", ok,
           fmt("%zu scenarios, P_D=%.2f%% (%zu/%zu), AUC=%.4f over %zu windows, window FAR=%.2e; %.1f s",
               noisy.size(), 100.0 * m.p_d, m.n_detected, m.n_fault_scenarios, roc.auc, scores.size(), m.far, secs));
}

void classification(const std::vector<eval::DetectionOutcome>& clean) {
    std::vector<FaultLabel> pred, truth;
    for (const auto& o : clean)
        if (o.true_positive()) {
            truth.push_back(*o.truth);
            pred.push_back(o.predicted.value_or(FaultLabel::unknown));
        }
    const auto c = eval::confusion_and_f1(pred, truth);
    bool only_siblings = true;
    std::string off;
    for (int t = 0; t < 10; ++t) {
        for (int p = 0; p < 10; ++p)
            if (t != p && c.matrix[t][p] > 0) {
                if (!siblings(kFaultClasses[t], kFaultClasses[p])) only_siblings = false;
                off += fmt(" %s->%s x%zu", std::string(to_string(kFaultClasses[t])).c_str(),
                           std::string(to_string(kFaultClasses[p])).c_str(), c.matrix[t][p]);
            }
        if (c.unknown[t] > 0) {
            only_siblings = false;
            off += fmt(" %s->unknown x%zu", std::string(to_string(kFaultClasses[t])).c_str(), c.unknown[t]);
        }
    }
    const bool ok = c.macro_f1 >= 0.90 && only_siblings;
    report(7, "classification", ok,
           fmt("macro-F1=%.2f%%, accuracy=%.2f%% over %zu; off-diagonal:%s", 100.0 * c.macro_f1, 100.0 * c.accuracy,
               c.n, off.empty() ? " none" : off.c_str()));
}

void high_impedance(const HealthyModel& model) {
    sim::GridSpec g;
    g.labels = {FaultLabel::abg, FaultLabel::acg, FaultLabel::bcg};
    g.r_f = {250.0};
    g.snr_db = {20.0};
    g.external_sides.clear();
    g.healthy.clear();
    const auto scenarios = sim::scenario_grid(g);
    const auto outcomes = pipeline::run_scenarios(scenarios, model);
    bool ok = true;
    double worst = 0.0;
    std::size_t detected = 0, early = 0;
    for (const auto& o : outcomes) {
        for (std::size_t w = 0; w < o.window_d_sq.size(); ++w)
            if (!o.window_faulty[w] && o.window_d_sq[w] > o.tau_det) ++early;
        if (o.true_positive()) {
            ++detected;
            worst = std::max(worst, 1e3 * (*o.t_detect - *o.t_f));
        } else {
            ok = false;
        }
    }
    ok = ok && worst <= 40.0 && early == 0;
    report(8, "high-impedance LLG at 20 dB", ok,
           fmt("%zu/%zu LLG r_f=250 ohm cases detected, worst T_D=%.1f ms, pre-fault windows above tau: %zu",
               detected, outcomes.size(), worst, early));
}

void comm_delay(const HealthyModel& model) {
    const pipeline::RunOptions delayed{10.0, {}};
    // Healthy records at steady load, clean and at 20 dB.
    sim::GridSpec h;
    h.labels.clear();
    h.snr_db = {std::numeric_limits<double>::infinity(), 20.0};
    h.healthy.clear();
    for (const auto& v : sim::default_healthy_variants())
        if (v.steps.size() <= 1 && (v.steps.empty() || v.steps.front().t_s == 0.0)) h.healthy.push_back(v);
    const auto healthy = pipeline::run_scenarios(sim::scenario_grid(h), model, delayed);
    std::size_t trips = 0;
    for (const auto& o : healthy) trips += o.tripped;

    // Load steps inside the skew are reported, not judged: the terminals then see different load levels.
    sim::GridSpec st = h;
    st.healthy.clear();
    for (const auto& v : sim::default_healthy_variants())
        if (!(v.steps.size() <= 1 && (v.steps.empty() || v.steps.front().t_s == 0.0))) st.healthy.push_back(v);
    const auto stepped = pipeline::run_scenarios(sim::scenario_grid(st), model, delayed);
    std::size_t step_trips = 0;
    for (const auto& o : stepped) step_trips += o.tripped;

    sim::GridSpec f;
    f.labels = {FaultLabel::abg, FaultLabel::acg, FaultLabel::bcg};
    f.r_f = {0.1};
    f.snr_db = {std::numeric_limits<double>::infinity()};
    f.external_sides.clear();
    f.healthy.clear();
    const auto llg = pipeline::run_scenarios(sim::scenario_grid(f), model, delayed);
    std::size_t correct = 0;
    std::string wrong;
    for (const auto& o : llg) {
        if (o.true_positive() && o.predicted == o.truth) ++correct;
        else wrong += " " + o.scenario_id + "=" + (o.predicted ? std::string(to_string(*o.predicted)) : "none");
    }
    const bool ok = trips == 0 && correct == llg.size();
    report(9, "communication delay", ok,
           fmt("10 ms skew: steady-load healthy trips %zu/%zu; LLG labels correct %zu/%zu%s; "
               "(not judged: load step during the skew trips %zu/%zu)",
               trips, healthy.size(), correct, llg.size(), wrong.c_str(), step_trips, stepped.size()));
}

// ---------------------------------------------------------------------------

void oracle_equivalences() {
    std::mt19937_64 rng(1234);
    double worst_g = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int bins = std::uniform_int_distribution<int>(2, 40)(rng);
        const int n = std::uniform_int_distribution<int>(1, 400)(rng);
        std::vector<double> p(bins);
        for (auto& x : p) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        stats::HistogramCounts s, r;
        s.counts = oracle::multinomial(rng, n, p);
        r.counts = oracle::multinomial(rng, n, p);
        const double ours = stats::g_statistic(s, r).g;
        const double ref = oracle::g_direct(s.counts, r.counts);
        const double rel = std::abs(ours - ref) / std::max(std::abs(ref), 1e-300);
        if (ref != 0.0 || ours != 0.0) worst_g = std::max(worst_g, rel);
    }

    double worst_m = 0.0;
    std::normal_distribution<double> nd;
    for (int i = 0; i < 1000; ++i) {
        oracle::M3 a{}, spd{};
        for (auto& row : a)
            for (auto& x : row) x = nd(rng);
        const double lambda = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
        stats::Mat3 gamma;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (int k = 0; k < 3; ++k) sum += a[r][k] * a[c][k];
                spd[r][c] = sum + (r == c ? 0.1 : 0.0);
                gamma(r, c) = spd[r][c];
            }
        oracle::M3 reg = spd;
        for (int d = 0; d < 3; ++d) reg[d][d] += lambda;
        const stats::Vec3 mu(nd(rng), nd(rng), nd(rng));
        const stats::Vec3 g(nd(rng) * 3, nd(rng) * 3, nd(rng) * 3);
        const double ours = stats::mahalanobis_sq(g, stats::CovarianceModel(mu, gamma, lambda));
        const std::array<double, 3> diff{g[0] - mu[0], g[1] - mu[1], g[2] - mu[2]};
        const double ref = oracle::quadratic_form(diff, oracle::inverse_cofactor(reg));
        worst_m = std::max(worst_m, std::abs(ours - ref) / std::max(std::abs(ref), 1e-300));
    }

    std::size_t mass_fail = 0;
    for (int i = 0; i < 1000; ++i) {
        const int k = std::uniform_int_distribution<int>(4, 40)(rng);
        const int n = std::uniform_int_distribution<int>(k + 1, 3000)(rng);
        std::vector<double> pool(n), values(std::uniform_int_distribution<int>(1, 500)(rng));
        const double scale = std::exp(nd(rng) * 3.0);
        for (auto& x : pool) x = nd(rng) * scale;
        for (auto& x : values) x = nd(rng) * scale * 2.0;
        const double r1 = std::uniform_real_distribution<double>(0.1, 0.4)(rng);
        const double r2 = std::uniform_real_distribution<double>(0.1, 0.5)(rng);
        const auto edges = calib::quantile_edges(pool, BinningSpec{k, r1, r2, 1.0 - r1 - r2});
        if (calib::histogram_counts(values, edges).total() != values.size()) ++mass_fail;
    }

    const bool ok = worst_g <= 1e-10 && worst_m <= 1e-9 && mass_fail == 0;
    report(10, "oracle equivalences", ok,
           fmt("g_statistic max rel err %.2e, mahalanobis_sq max rel err %.2e, histogram mass failures %zu/1000",
               worst_g, worst_m, mass_fail));
}

}  // namespace

int main() {
    threshold_reproduction();
    zero_sequence_thresholds();
    null_calibration();
    far_control();

    const Shared shared = tune_default();
    auto t0 = Clock::now();
    const auto clean = run_grid(shared.model, std::numeric_limits<double>::infinity());
    clean_detection(shared, clean, seconds_since(t0));
    t0 = Clock::now();
    const auto noisy = run_grid(shared.model, 20.0);
    noisy_detection(noisy, seconds_since(t0));
    classification(clean);
    high_impedance(shared.model);
    comm_delay(shared.model);
    oracle_equivalences();

    std::printf("%d of 10 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
