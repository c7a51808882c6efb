#include "kldp/calibrate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <tuple>

#include "kldp/errors.hpp"

namespace kldp {

void WindowConfig::validate() const {
    if (length < 2) throw ValidationError("window length must be at least 2 samples");
    if (hop < 1 || hop > length) throw ValidationError("window hop must satisfy 1 <= S <= L");
    if (!(sample_rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
}

void BinningSpec::validate() const {
    if (k < 4) throw ValidationError("bin count must be at least 4");
    if (!(r1 > 0.0 && r2 > 0.0 && r3 > 0.0)) throw ValidationError("zone ratios must be positive");
    if (std::abs(r1 + r2 + r3 - 1.0) > 1e-9) throw ValidationError("zone ratios must sum to 1");
}

std::array<int, 3> BinningSpec::zone_bins() const {
    int n1 = std::max(1, static_cast<int>(std::lround(k * r1)));
    int n2 = std::max(1, static_cast<int>(std::lround(k * r2)));
    while (k - n1 - n2 < 1) {
        if (n1 >= n2 && n1 > 1) --n1;
        else if (n2 > 1) --n2;
        else break;
    }
    return {n1, n2, k - n1 - n2};
}

void HistogramEdges::validate() const {
    if (edges.size() < 2) throw ValidationError("histogram needs at least two edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (!std::isfinite(edges[i])) throw ValidationError("histogram edges must be finite");
        if (i > 0 && !(edges[i] > edges[i - 1])) throw ValidationError("histogram edges must strictly increase");
    }
}

namespace calib {
namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double rms(std::span<const double> x) {
    double ss = 0.0;
    for (double v : x) ss += v * v;
    return std::sqrt(ss / static_cast<double>(x.size()));
}

double sorted_quantile(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    return sorted[i] + (pos - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
}

// Plotting-position quantiles are shared across candidates with the same (n, dof).
std::shared_ptr<const std::vector<double>> cached_quantiles(std::size_t n, int dof) {
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, int>, std::shared_ptr<const std::vector<double>>> cache;
    const auto key = std::make_pair(n, dof);
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    auto q = std::make_shared<const std::vector<double>>(stats::chi2_plotting_quantiles(n, dof));
    std::lock_guard lock(mutex);
    return cache.emplace(key, std::move(q)).first->second;
}

int modal_value(const std::vector<int>& values) {
    std::map<int, std::size_t> freq;
    for (int v : values) ++freq[v];
    int best = 0;
    std::size_t best_count = 0;
    for (const auto& [v, c] : freq) {
        if (c > best_count) {
            best = v;
            best_count = c;
        }
    }
    return best;
}

PhaseFit fit_group(const HealthyDataset& data, int group, const BinningSpec& spec, ZoneQuantiles zones) {
    if (data.windows.size() < 30) throw DegenerateInputError("calibration needs at least 30 healthy windows");
    PhaseFit fit;
    fit.edges = quantile_edges_sorted(data.sorted_pool[group], spec, zones);
    const int len = data.window.length;
    const std::size_t n = data.windows.size();
    std::vector<double> gstar(n);
    std::vector<int> keff(n);
    const int s_idx = group < 3 ? group : 6;
    const int r_idx = group < 3 ? group + 3 : 7;
    for (std::size_t w = 0; w < n; ++w) {
        const auto views = data.view(data.windows[w]);
        const auto res = group_statistic(views[s_idx], views[r_idx], fit.edges, len);
        gstar[w] = res.g_star;
        keff[w] = res.k_eff;
    }
    fit.modal_k_eff = modal_value(keff);
    if (fit.modal_k_eff < 2) throw DegenerateInputError("healthy windows populate fewer than two bins");
    std::sort(gstar.begin(), gstar.end());
    const auto q = cached_quantiles(n, fit.modal_k_eff - 1);
    fit.rho = stats::qq_correlation(gstar, *q);
    return fit;
}

}  // namespace

double noise_sigma(double reference_rms, double snr_db) {
    if (!(reference_rms > 0.0) || !std::isfinite(reference_rms))
        throw DegenerateInputError("noise reference rms must be positive");
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return reference_rms / std::pow(10.0, snr_db / 20.0);
}

std::vector<double> augment_noise(std::span<const double> signal, double snr_db, std::uint64_t seed,
                                  std::optional<double> reference_rms) {
    if (signal.empty()) throw DegenerateInputError("cannot add noise to an empty signal");
    std::vector<double> out(signal.begin(), signal.end());
    if (std::isinf(snr_db) && snr_db > 0) return out;
    const double sigma = noise_sigma(reference_rms.value_or(rms(signal)), snr_db);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out) v += noise(rng);
    return out;
}

std::vector<double> log_transform(std::span<const double> signal) {
    std::vector<double> out(signal.size());
    std::transform(signal.begin(), signal.end(), out.begin(), [](double x) { return std::log1p(std::abs(x)); });
    return out;
}

std::vector<double> zero_sequence(std::span<const double> ia, std::span<const double> ib,
                                  std::span<const double> ic) {
    if (ia.size() != ib.size() || ia.size() != ic.size())
        throw ShapeError("phase channels differ in length");
    std::vector<double> out(ia.size());
    for (std::size_t i = 0; i < ia.size(); ++i) out[i] = ia[i] + ib[i] + ic[i];
    return out;
}

std::vector<Window> make_windows(std::size_t n_samples, const WindowConfig& cfg, double t0_s) {
    cfg.validate();
    const auto len = static_cast<std::size_t>(cfg.length);
    if (n_samples < len) throw DegenerateInputError("signal shorter than one window");
    const std::size_t count = (n_samples - len) / static_cast<std::size_t>(cfg.hop) + 1;
    std::vector<Window> out(count);
    for (std::size_t m = 0; m < count; ++m) {
        out[m].start = m * static_cast<std::size_t>(cfg.hop);
        out[m].t_end = t0_s + static_cast<double>(out[m].start + len - 1) / cfg.sample_rate_hz;
    }
    return out;
}

std::vector<Window> make_windows(std::span<const double> signal, const WindowConfig& cfg, double t0_s) {
    return make_windows(signal.size(), cfg, t0_s);
}

HistogramEdges quantile_edges(std::span<const double> healthy_values, const BinningSpec& spec, ZoneQuantiles zones) {
    std::vector<double> sorted(healthy_values.begin(), healthy_values.end());
    std::sort(sorted.begin(), sorted.end());
    return quantile_edges_sorted(sorted, spec, zones);
}

HistogramEdges quantile_edges_sorted(std::span<const double> sorted, const BinningSpec& spec, ZoneQuantiles zones) {
    spec.validate();
    if (!(zones.lo > 0.0 && zones.lo < zones.hi && zones.hi < 1.0))
        throw ValidationError("zone quantiles must satisfy 0 < q_lo < q_hi < 1");
    std::size_t distinct = sorted.empty() ? 0 : 1;
    for (std::size_t i = 1; i < sorted.size() && distinct <= static_cast<std::size_t>(spec.k); ++i)
        if (sorted[i] != sorted[i - 1]) ++distinct;
    if (distinct < static_cast<std::size_t>(spec.k) + 1)
        throw DegenerateInputError("too few distinct values for the requested bin count");

    const auto [n1, n2, n3] = spec.zone_bins();
    std::vector<double> levels;
    levels.reserve(spec.k + 1);
    for (int i = 0; i <= n1; ++i) levels.push_back(zones.lo * i / n1);
    for (int i = 1; i <= n2; ++i) levels.push_back(zones.lo + (zones.hi - zones.lo) * i / n2);
    for (int i = 1; i <= n3; ++i) levels.push_back(zones.hi + (1.0 - zones.hi) * i / n3);
    levels.back() = 1.0;

    constexpr double kEps = 1e-12;
    HistogramEdges out;
    out.edges.reserve(levels.size());
    for (double q : levels) {
        double e = sorted_quantile(sorted, q);
        if (!out.edges.empty() && e <= out.edges.back()) {
            e = out.edges.back() + kEps;
            if (e <= out.edges.back()) e = std::nextafter(out.edges.back(), std::numeric_limits<double>::infinity());
        }
        out.edges.push_back(e);
    }
    return out;
}

int bin_index(double value, const HistogramEdges& edges) {
    const auto& e = edges.edges;
    const auto first = e.begin() + 1;
    const auto last = e.end() - 1;
    return static_cast<int>(std::lower_bound(first, last, value) - first);
}

void histogram_counts_into(std::span<const double> values, const HistogramEdges& edges,
                           stats::HistogramCounts& out) {
    const std::size_t k = static_cast<std::size_t>(edges.n_bins());
    out.counts.assign(k, 0);
    if (k == 0) return;
    for (double v : values) ++out.counts[static_cast<std::size_t>(bin_index(v, edges))];
}

stats::HistogramCounts histogram_counts(std::span<const double> values, const HistogramEdges& edges) {
    stats::HistogramCounts out;
    histogram_counts_into(values, edges, out);
    return out;
}

stats::GStatResult group_statistic(std::span<const double> sending, std::span<const double> receiving,
                                   const HistogramEdges& edges, int window_len) {
    thread_local stats::HistogramCounts hs, hr;
    histogram_counts_into(sending, edges, hs);
    histogram_counts_into(receiving, edges, hr);
    return stats::corrected_g_statistic(hs, hr, window_len);
}

GVector score_transformed(const ChannelViews& window, const EdgeSet& edges, int window_len) {
    GVector g;
    g.g_a = group_statistic(window[0], window[3], edges[0], window_len).g_star;
    g.g_b = group_statistic(window[1], window[4], edges[1], window_len).g_star;
    g.g_c = group_statistic(window[2], window[5], edges[2], window_len).g_star;
    g.g0 = group_statistic(window[6], window[7], edges[3], window_len).g_star;
    return g;
}

ChannelViews HealthyDataset::view(const WindowRef& w) const {
    ChannelViews out;
    const auto& rec = records[w.record];
    const auto len = static_cast<std::size_t>(window.length);
    for (std::size_t c = 0; c < 8; ++c) out[c] = std::span<const double>(rec[c]).subspan(w.start, len);
    return out;
}

HealthyDataset prepare_healthy_dataset(std::span<const WaveformRecord> records, const WindowConfig& window,
                                       const AugmentConfig& augment) {
    window.validate();
    if (records.empty()) throw DegenerateInputError("no healthy records");
    std::vector<double> snrs = augment.snr_db;
    if (snrs.empty()) snrs.push_back(std::numeric_limits<double>::infinity());

    HealthyDataset data;
    data.window = window;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const WaveformRecord& rec = records[r];
        if (std::abs(rec.sample_rate_hz - window.sample_rate_hz) > 1e-9 * window.sample_rate_hz)
            throw ValidationError("record sample rate differs from the window configuration");
        for (std::size_t copy = 0; copy < snrs.size(); ++copy) {
            std::array<std::vector<double>, 6> phases;
            for (std::size_t c = 0; c < kPhaseChannels; ++c) {
                const std::uint64_t seed = mix64(augment.seed ^ mix64((r << 20) ^ (copy << 8) ^ c));
                phases[c] = augment_noise(rec.channels[c], snrs[copy], seed);
            }
            std::array<std::vector<double>, 8> out;
            for (std::size_t c = 0; c < kPhaseChannels; ++c) out[c] = log_transform(phases[c]);
            out[6] = log_transform(zero_sequence(phases[0], phases[1], phases[2]));
            out[7] = log_transform(zero_sequence(phases[3], phases[4], phases[5]));
            const std::size_t idx = data.records.size();
            for (const auto& w : make_windows(rec.size(), window, rec.t0_s))
                data.windows.push_back({idx, w.start, w.t_end});
            data.records.push_back(std::move(out));
        }
    }
    for (int g = 0; g < 4; ++g) {
        auto& pool = data.sorted_pool[g];
        const std::size_t s_idx = g < 3 ? g : 6;
        const std::size_t r_idx = g < 3 ? g + 3 : 7;
        for (const auto& rec : data.records) {
            pool.insert(pool.end(), rec[s_idx].begin(), rec[s_idx].end());
            pool.insert(pool.end(), rec[r_idx].begin(), rec[r_idx].end());
        }
        std::sort(pool.begin(), pool.end());
    }
    return data;
}

double qq_objective(const std::array<std::span<const double>, 3>& gstar, const std::array<int, 3>& dof) {
    double sum = 0.0;
    for (int p = 0; p < 3; ++p) {
        const double rho = stats::qq_correlation(gstar[p], dof[p]);
        sum += rho * rho;
    }
    return sum / 3.0;
}

ObjectiveDetail calibration_objective_detail(const HealthyDataset& data, const std::array<BinningSpec, 3>& specs,
                                             ZoneQuantiles zones) {
    ObjectiveDetail out;
    double sum = 0.0;
    for (int p = 0; p < 3; ++p) {
        out.phases[p] = fit_group(data, p, specs[p], zones);
        sum += out.phases[p].rho * out.phases[p].rho;
    }
    out.objective = sum / 3.0;
    return out;
}

double calibration_objective(const HealthyDataset& data, const std::array<BinningSpec, 3>& specs,
                             ZoneQuantiles zones) {
    return calibration_objective_detail(data, specs, zones).objective;
}

PhaseFit zero_sequence_fit(const HealthyDataset& data, const BinningSpec& spec, ZoneQuantiles zones) {
    return fit_group(data, 3, spec, zones);
}

std::vector<GVector> healthy_gvectors(const HealthyDataset& data, const EdgeSet& edges) {
    std::vector<GVector> out;
    out.reserve(data.windows.size());
    for (const auto& w : data.windows) {
        GVector g = score_transformed(data.view(w), edges, data.window.length);
        g.t_end = w.t_end;
        out.push_back(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binning search
// ---------------------------------------------------------------------------

namespace {

constexpr int kLocalBatch = 4;

BinningSpec spec_from_unit(double uk, double u1, double u2, const SearchSpace& space) {
    const int range = space.k_max - space.k_min + 1;
    BinningSpec s;
    s.k = space.k_min + std::min(static_cast<int>(uk * range), range - 1);
    const double a = std::min(u1, u2), b = std::max(u1, u2);
    const double scale = 1.0 - 3.0 * space.r_min;
    s.r1 = space.r_min + scale * a;
    s.r2 = space.r_min + scale * (b - a);
    s.r3 = 1.0 - s.r1 - s.r2;
    return s;
}

using SpecKey = std::tuple<int, double, double>;
SpecKey key_of(const BinningSpec& s) { return {s.k, s.r1, s.r2}; }

std::vector<double> evaluate_batch(const BinningObjective& objective, const std::vector<BinningSpec>& specs,
                                   int jobs) {
    std::vector<double> scores(specs.size(), -std::numeric_limits<double>::infinity());
    auto eval_one = [&](std::size_t i) {
        try {
            scores[i] = objective(specs[i]);
        } catch (const DegenerateInputError&) {
        } catch (const ConditioningError&) {
        }
    };
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(specs.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < specs.size(); ++i) eval_one(i);
        return scores;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < specs.size(); i = next++) {
                try {
                    eval_one(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return scores;
}

}  // namespace

OptimizationResult maximize_binning(const BinningObjective& objective, const OptimizerOptions& options) {
    const SearchSpace& space = options.space;
    if (options.budget < 1) throw ValidationError("optimizer budget must be at least 1");
    if (space.k_min < 4 || space.k_max < space.k_min) throw ValidationError("invalid bin-count range");
    if (!(space.r_min > 0.0 && 3.0 * space.r_min < 1.0)) throw ValidationError("invalid minimum zone ratio");

    std::mt19937_64 rng(mix64(options.seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    OptimizationResult result;
    result.best_score = -std::numeric_limits<double>::infinity();
    std::map<SpecKey, double> seen;

    auto record = [&](const std::vector<BinningSpec>& specs, const std::vector<double>& scores) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            seen.emplace(key_of(specs[i]), scores[i]);
            result.history.push_back({specs[i], scores[i]});
            if (scores[i] > result.best_score) {
                result.best_score = scores[i];
                result.best = specs[i];
            }
        }
    };

    const int n_seed = options.budget <= 10 ? options.budget : std::max(10, options.budget * 2 / 5);
    {
        std::array<std::vector<int>, 3> strata;
        for (auto& s : strata) {
            s.resize(n_seed);
            std::iota(s.begin(), s.end(), 0);
            std::shuffle(s.begin(), s.end(), rng);
        }
        std::vector<BinningSpec> specs;
        for (int i = 0; i < n_seed; ++i) {
            std::array<double, 3> u;
            for (int d = 0; d < 3; ++d) u[d] = (strata[d][i] + unit(rng)) / n_seed;
            BinningSpec s = spec_from_unit(u[0], u[1], u[2], space);
            if (seen.count(key_of(s))) continue;
            seen.emplace(key_of(s), 0.0);
            specs.push_back(s);
        }
        record(specs, evaluate_batch(objective, specs, options.jobs));
    }

    double step = 0.08;
    int remaining = options.budget - static_cast<int>(result.history.size());
    int attempts = 0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    while (remaining > 0 && attempts < 50 * options.budget) {
        const BinningSpec centre = std::isfinite(result.best_score) ? result.best : result.history.front().spec;
        std::vector<BinningSpec> batch;
        while (static_cast<int>(batch.size()) < std::min(kLocalBatch, remaining) && attempts < 50 * options.budget) {
            ++attempts;
            BinningSpec s = centre;
            if (unit(rng) < 0.5) {
                static constexpr std::array<int, 4> kMoves{-2, -1, 1, 2};
                s.k = std::clamp(centre.k + kMoves[static_cast<std::size_t>(unit(rng) * 4) % 4], space.k_min,
                                 space.k_max);
            }
            if (unit(rng) < 0.7) {
                const double r1 = centre.r1 + step * gauss(rng);
                const double r2 = centre.r2 + step * gauss(rng);
                const double r3 = 1.0 - r1 - r2;
                if (r1 >= space.r_min && r2 >= space.r_min && r3 >= space.r_min) {
                    s.r1 = r1;
                    s.r2 = r2;
                    s.r3 = r3;
                }
            }
            if (seen.count(key_of(s))) continue;
            seen.emplace(key_of(s), 0.0);
            batch.push_back(s);
        }
        if (batch.empty()) break;
        const double before = result.best_score;
        record(batch, evaluate_batch(objective, batch, options.jobs));
        remaining -= static_cast<int>(batch.size());
        if (!(result.best_score > before)) step = std::max(0.01, step * 0.8);
    }

    if (!std::isfinite(result.best_score)) throw DegenerateInputError("no binning candidate could be evaluated");
    return result;
}

BinningTuning optimize_binning(const HealthyDataset& data, const OptimizerOptions& options, ZoneQuantiles zones) {
    if (data.windows.empty()) throw DegenerateInputError("no healthy windows to calibrate on");
    BinningTuning out;
    const auto phase = maximize_binning(
        [&](const BinningSpec& s) { return calibration_objective(data, {s, s, s}, zones); }, options);
    OptimizerOptions zero_options = options;
    zero_options.seed = mix64(options.seed ^ 0x5a5a5a5aULL);
    const auto zero = maximize_binning(
        [&](const BinningSpec& s) {
            const double rho = zero_sequence_fit(data, s, zones).rho;
            return rho * rho;
        },
        zero_options);
    out.phase_spec = phase.best;
    out.zero_spec = zero.best;
    out.phase_evaluations = static_cast<int>(phase.history.size());
    out.zero_evaluations = static_cast<int>(zero.history.size());
    out.phases = calibration_objective_detail(data, {phase.best, phase.best, phase.best}, zones);
    out.zero = zero_sequence_fit(data, zero.best, zones);
    return out;
}

}  // namespace calib
}  // namespace kldp
