#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kldp/statcore.hpp"
#include "kldp/waveform.hpp"

namespace kldp {

/// Sliding analysis window: `length` samples, advanced by `hop` samples.
struct WindowConfig {
    int length = 200;
    int hop = 20;
    double sample_rate_hz = 10000.0;

    void validate() const;
    bool operator==(const WindowConfig&) const = default;
};

/// Per-window Bartlett-corrected statistics: three phases plus zero sequence.
struct GVector {
    double g_a = 0.0;
    double g_b = 0.0;
    double g_c = 0.0;
    double g0 = 0.0;
    double t_end = 0.0;

    stats::Vec3 phases() const { return {g_a, g_b, g_c}; }
    double phase(int p) const { return p == 0 ? g_a : (p == 1 ? g_b : g_c); }
};

/// Bin count and the share of bins given to the lower tail, centre and upper tail.
struct BinningSpec {
    int k = 16;
    double r1 = 0.25;
    double r2 = 0.50;
    double r3 = 0.25;

    void validate() const;
    /// Bins per zone after rounding; each zone gets at least one bin.
    std::array<int, 3> zone_bins() const;
    bool operator==(const BinningSpec&) const = default;
};

/// Quantile levels separating the tail zones from the centre zone.
struct ZoneQuantiles {
    double lo = 0.10;
    double hi = 0.90;
};

/// k + 1 strictly increasing edges; the first and last bins are open-ended.
struct HistogramEdges {
    std::vector<double> edges;

    int n_bins() const { return edges.empty() ? 0 : static_cast<int>(edges.size()) - 1; }
    void validate() const;
    bool operator==(const HistogramEdges&) const = default;
};

namespace calib {

// ---------------------------------------------------------------------------
// Signal preparation
// ---------------------------------------------------------------------------

/// Noise standard deviation giving `snr_db` against a signal of RMS `reference_rms`.
double noise_sigma(double reference_rms, double snr_db);

/// Adds zero-mean white Gaussian noise at the requested SNR. The reference RMS
/// defaults to the RMS of `signal`. An infinite SNR returns the signal unchanged.
std::vector<double> augment_noise(std::span<const double> signal, double snr_db, std::uint64_t seed,
                                  std::optional<double> reference_rms = std::nullopt);

/// ln(1 + |x|) elementwise.
std::vector<double> log_transform(std::span<const double> signal);

std::vector<double> zero_sequence(std::span<const double> ia, std::span<const double> ib,
                                  std::span<const double> ic);

struct Window {
    std::size_t start = 0;
    double t_end = 0.0;  // timestamp of the last sample in the window
};

/// Windows start at m * hop; count is floor((n - L) / S) + 1.
std::vector<Window> make_windows(std::size_t n_samples, const WindowConfig& cfg, double t0_s = 0.0);
std::vector<Window> make_windows(std::span<const double> signal, const WindowConfig& cfg,
                                 double t0_s = 0.0);

// ---------------------------------------------------------------------------
// Adaptive binning
// ---------------------------------------------------------------------------

HistogramEdges quantile_edges(std::span<const double> healthy_values, const BinningSpec& spec,
                              ZoneQuantiles zones = {});

/// Same as quantile_edges for input already sorted ascending.
HistogramEdges quantile_edges_sorted(std::span<const double> sorted_values, const BinningSpec& spec,
                                     ZoneQuantiles zones = {});

/// Bin index of one value. A value equal to an interior edge belongs to the lower bin.
int bin_index(double value, const HistogramEdges& edges);

stats::HistogramCounts histogram_counts(std::span<const double> values, const HistogramEdges& edges);

/// Reuses `out` to avoid allocation in tight loops.
void histogram_counts_into(std::span<const double> values, const HistogramEdges& edges,
                           stats::HistogramCounts& out);

// ---------------------------------------------------------------------------
// Scoring on log-transformed channels
// ---------------------------------------------------------------------------

/// Index of each group's edges in an EdgeSet: phases a, b, c then zero sequence.
using EdgeSet = std::array<HistogramEdges, 4>;

/// Eight transformed channels ordered (a_s, b_s, c_s, a_r, b_r, c_r, 0_s, 0_r).
using ChannelViews = std::array<std::span<const double>, 8>;

/// Bartlett-corrected statistic between the sending and receiving views of one group.
stats::GStatResult group_statistic(std::span<const double> sending, std::span<const double> receiving,
                                   const HistogramEdges& edges, int window_len);

GVector score_transformed(const ChannelViews& window, const EdgeSet& edges, int window_len);

// ---------------------------------------------------------------------------
// Healthy dataset
// ---------------------------------------------------------------------------

struct AugmentConfig {
    /// One SNR per augmented copy of each record; an empty list or +inf entries mean no noise.
    std::vector<double> snr_db = {30.0};
    std::uint64_t seed = 1;
};

/// Log-transformed, noise-augmented healthy data cut into windows, plus the pooled
/// and sorted values of each channel group used to place histogram edges.
struct HealthyDataset {
    WindowConfig window;
    std::vector<std::array<std::vector<double>, 8>> records;
    struct WindowRef {
        std::size_t record = 0;
        std::size_t start = 0;
        double t_end = 0.0;
    };
    std::vector<WindowRef> windows;
    std::array<std::vector<double>, 4> sorted_pool;

    ChannelViews view(const WindowRef& w) const;
};

HealthyDataset prepare_healthy_dataset(std::span<const WaveformRecord> records, const WindowConfig& window,
                                       const AugmentConfig& augment);

// ---------------------------------------------------------------------------
// Calibration objective
// ---------------------------------------------------------------------------

/// Mean over phases of the squared Q-Q correlation. Each sample vector is
/// correlated as given against chi-square quantiles with the matching dof.
double qq_objective(const std::array<std::span<const double>, 3>& gstar, const std::array<int, 3>& dof);

struct PhaseFit {
    HistogramEdges edges;
    int modal_k_eff = 0;
    double rho = 0.0;
};

struct ObjectiveDetail {
    double objective = 0.0;
    std::array<PhaseFit, 3> phases;
};

/// Places edges per phase from the pooled healthy values, scores every window and
/// returns (1/3) sum rho_p^2 with rho_p the Q-Q correlation of the sorted g* values
/// against chi-square(modal k_eff - 1).
ObjectiveDetail calibration_objective_detail(const HealthyDataset& data, const std::array<BinningSpec, 3>& specs,
                                             ZoneQuantiles zones = {});
double calibration_objective(const HealthyDataset& data, const std::array<BinningSpec, 3>& specs,
                             ZoneQuantiles zones = {});

/// rho^2 of the zero-sequence statistic for a zero-sequence binning.
PhaseFit zero_sequence_fit(const HealthyDataset& data, const BinningSpec& spec, ZoneQuantiles zones = {});

// ---------------------------------------------------------------------------
// Binning search
// ---------------------------------------------------------------------------

struct SearchSpace {
    int k_min = 8;
    int k_max = 40;
    double r_min = 0.10;
};

struct OptimizerOptions {
    int budget = 60;
    std::uint64_t seed = 1;
    int jobs = 1;
    SearchSpace space;
};

struct Evaluation {
    BinningSpec spec;
    double score = 0.0;
};

struct OptimizationResult {
    BinningSpec best;
    double best_score = 0.0;
    std::vector<Evaluation> history;  // in evaluation order
};

using BinningObjective = std::function<double(const BinningSpec&)>;

/// Latin-hypercube seeding over (k, r1, r2) followed by local refinement around
/// the incumbent. Deterministic for a given seed; the objective may throw
/// DegenerateInputError for a candidate, which then scores below every valid one.
OptimizationResult maximize_binning(const BinningObjective& objective, const OptimizerOptions& options);

struct BinningTuning {
    BinningSpec phase_spec;  // shared by the three phases
    BinningSpec zero_spec;
    ObjectiveDetail phases;
    PhaseFit zero;
    int phase_evaluations = 0;
    int zero_evaluations = 0;
};

BinningTuning optimize_binning(const HealthyDataset& data, const OptimizerOptions& options,
                               ZoneQuantiles zones = {});

/// g-vectors of every healthy window under fixed edges.
std::vector<GVector> healthy_gvectors(const HealthyDataset& data, const EdgeSet& edges);

}  // namespace calib
}  // namespace kldp
