#pragma once

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "kldp/calibrate.hpp"
#include "kldp/fault_label.hpp"
#include "kldp/model.hpp"
#include "kldp/waveform.hpp"

namespace kldp::engine {

/// Instantaneous per-phase and ground flags plus the last m values of each.
struct PhaseFlags {
    PhaseSet now;
    std::array<std::deque<bool>, 4> history;  // a, b, c, ground; oldest first

    void push(const PhaseSet& flags, int m);
    /// Flags confirmed by the j-of-m vote over the stored history.
    PhaseSet voted(int j, int m) const;
};

struct DetectResult {
    double d_sq = 0.0;
    bool tripped = false;
};

/// Raw (untransformed) window of the 8 channels (Ia_s, Ib_s, Ic_s, Ia_r, Ib_r, Ic_r, I0_s, I0_r).
GVector score_window(const calib::ChannelViews& window8, const HealthyModel& model);

DetectResult detect(const GVector& gv, const HealthyModel& model);

std::array<double, 3> z_scores(const GVector& gv, const HealthyModel& model);

/// Absolute and jump tests per phase and for the ground channel; appends to the history.
PhaseFlags classify_step(const GVector& gv, const GVector& prev_gv, const HealthyModel& model, PhaseFlags state);

bool persistence_vote(const std::deque<bool>& history, int j, int m);

FaultLabel map_fault_type(const PhaseSet& persistent);

/// Stand-in for the window before the first one: phase means, and zero for g0.
GVector initial_previous(const HealthyModel& model);

struct WindowLog {
    double t_end = 0.0;
    double d_sq = 0.0;
    std::array<double, 3> z{};
    double g0 = 0.0;
    PhaseSet flags;      // instantaneous; all false before detection
    bool tripped = false;  // latched once the relay trips
    std::optional<FaultLabel> label;  // voted label; empty until a vote exists
};

struct DetectionEvent {
    double t_detect = 0.0;
    double d_sq = 0.0;
    std::array<double, 3> z{};
    double g0 = 0.0;
    std::optional<FaultLabel> label;  // pending until the vote stabilizes
};

struct StreamOptions {
    /// Consecutive windows above tau_det required before tripping.
    int confirm_windows = 1;
    /// Consecutive windows with the same known voted label before it is reported.
    int label_stability = 4;
    /// Windows starting before this sample index are not evaluated.
    std::size_t valid_from_sample = 0;
};

struct StreamResult {
    std::vector<WindowLog> windows;
    std::optional<DetectionEvent> detection;
    /// Reported label: first stable vote, else the last known vote, else empty.
    std::optional<FaultLabel> label;
};

/// Sequential engine for one protected line, fed one transformed window at a time.
class LineEngine {
public:
    LineEngine(const HealthyModel& model, StreamOptions options = {});

    WindowLog step(const calib::ChannelViews& transformed_window, double t_end);

    const std::optional<DetectionEvent>& detection() const { return detection_; }
    std::optional<FaultLabel> reported_label() const;

private:
    const HealthyModel& model_;
    StreamOptions options_;
    GVector prev_;
    PhaseFlags flags_;
    int above_ = 0;
    bool tripped_ = false;
    std::optional<DetectionEvent> detection_;
    std::optional<FaultLabel> last_vote_;
    std::optional<FaultLabel> stable_label_;
    std::optional<FaultLabel> last_known_;
    int vote_run_ = 0;
};

/// Log-transformed eight-channel view of a full record.
std::array<std::vector<double>, 8> transform_record(const WaveformRecord& record);

StreamResult run_stream(const WaveformRecord& record, const HealthyModel& model, const StreamOptions& options = {});

}  // namespace kldp::engine
