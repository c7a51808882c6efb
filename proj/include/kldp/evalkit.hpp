#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kldp/fault_label.hpp"

namespace kldp::eval {

/// Result of one scenario run, including the per-window trace used for FAR and ROC.
struct DetectionOutcome {
    std::string scenario_id;
    bool tripped = false;
    std::optional<double> t_detect;
    std::optional<double> t_f;
    std::optional<FaultLabel> predicted;
    std::optional<FaultLabel> truth;  // empty for healthy scenarios
    bool internal = false;            // faults outside the protected line are not detection targets
    std::optional<double> snr_db;     // empty means noise-free
    std::string source_mode;
    double tau_det = 0.0;
    std::vector<double> window_t_end;
    std::vector<double> window_d_sq;
    std::vector<bool> window_faulty;

    /// True for internal faults, the scenarios that count toward P_D.
    bool is_fault_target() const { return internal && truth.has_value(); }
    bool true_positive() const;
};

struct DetectionMetrics {
    std::size_t n_fault_scenarios = 0;
    std::size_t n_detected = 0;
    double p_d = 0.0;  // NaN without fault scenarios
    double mean_t_d_ms = 0.0;  // NaN without detections
    std::size_t n_healthy_windows = 0;
    std::size_t n_flagged_windows = 0;
    /// Healthy-tagged windows flagged, over every scenario (pre-fault windows included).
    double far = 0.0;
    /// Same, restricted to scenarios without an internal fault.
    double far_non_fault_scenarios = 0.0;
    std::size_t n_non_fault_scenarios = 0;
    std::size_t n_non_fault_trips = 0;
};

DetectionMetrics detection_metrics(std::span<const DetectionOutcome> outcomes);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocResult {
    std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
    double auc = 0.0;
};

/// Threshold sweep over the distinct scores (score >= threshold is positive), trapezoid AUC.
RocResult roc_curve(std::span<const double> scores, const std::vector<bool>& labels);

struct ConfusionResult {
    std::array<std::array<std::size_t, 10>, 10> matrix{};  // row truth, column prediction
    std::array<std::size_t, 10> unknown{};                 // predictions outside the ten classes, per truth row
    std::array<double, 10> f1{};                           // NaN for classes absent from truth
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::size_t n = 0;
};

/// Predictions may be unknown (counted as misclassified); truth must be one of the ten classes.
ConfusionResult confusion_and_f1(std::span<const FaultLabel> predicted, std::span<const FaultLabel> truth);

/// One summary row per noise condition plus an overall row.
struct SummaryRow {
    std::string scenario;
    DetectionMetrics detection;
    std::optional<ConfusionResult> classification;
};

struct Report {
    std::vector<SummaryRow> rows;  // conditions sorted clean first, then by decreasing SNR; "overall" last
    std::optional<RocResult> roc;  // window-level, all outcomes; empty unless both classes occur
    std::optional<ConfusionResult> confusion;  // detected internal faults, all conditions
};

Report build_report(std::span<const DetectionOutcome> outcomes);

/// Writes report.json, roc_points.csv, confusion.csv and summary.csv into `dir`.
void write_report(const Report& report, const std::filesystem::path& dir, const std::string& config_hash);

std::string outcome_to_json(const DetectionOutcome& outcome, const std::string& config_hash);
DetectionOutcome outcome_from_json(const std::string& text);

}  // namespace kldp::eval
