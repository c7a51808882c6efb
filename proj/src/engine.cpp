#include "kldp/engine.hpp"

#include <cmath>

#include "kldp/errors.hpp"

namespace kldp::engine {

void PhaseFlags::push(const PhaseSet& flags, int m) {
    now = flags;
    const std::array<bool, 4> bits{flags.a, flags.b, flags.c, flags.ground};
    for (int i = 0; i < 4; ++i) {
        history[i].push_back(bits[i]);
        while (static_cast<int>(history[i].size()) > m) history[i].pop_front();
    }
}

PhaseSet PhaseFlags::voted(int j, int m) const {
    return {persistence_vote(history[0], j, m), persistence_vote(history[1], j, m),
            persistence_vote(history[2], j, m), persistence_vote(history[3], j, m)};
}

GVector score_window(const calib::ChannelViews& window8, const HealthyModel& model) {
    const auto len = static_cast<std::size_t>(model.window.length);
    std::array<std::vector<double>, 8> transformed;
    calib::ChannelViews views;
    for (std::size_t c = 0; c < 8; ++c) {
        if (window8[c].size() != len) throw ShapeError("window length differs from the model");
        transformed[c] = calib::log_transform(window8[c]);
        views[c] = transformed[c];
    }
    return calib::score_transformed(views, model.edges, model.window.length);
}

DetectResult detect(const GVector& gv, const HealthyModel& model) {
    DetectResult r;
    r.d_sq = stats::mahalanobis_sq(gv.phases(), model.covariance);
    r.tripped = r.d_sq > model.thresholds.tau_det;
    return r;
}

std::array<double, 3> z_scores(const GVector& gv, const HealthyModel& model) {
    std::array<double, 3> z{};
    for (int p = 0; p < 3; ++p) {
        if (!(model.sigma_p[p] > 0.0)) throw ConditioningError("per-phase healthy deviation is zero");
        z[p] = (gv.phase(p) - model.mu_p[p]) / model.sigma_p[p];
    }
    return z;
}

PhaseFlags classify_step(const GVector& gv, const GVector& prev_gv, const HealthyModel& model, PhaseFlags state) {
    const auto& th = model.thresholds;
    const auto z = z_scores(gv, model);
    std::array<bool, 3> phase{};
    for (int p = 0; p < 3; ++p)
        phase[p] = std::abs(z[p]) > th.z_cls || std::abs(gv.phase(p) - prev_gv.phase(p)) > th.dg_cls;
    const bool ground = gv.g0 > th.tau0_cls || std::abs(gv.g0 - prev_gv.g0) > th.dg0_cls;
    state.push({phase[0], phase[1], phase[2], ground}, model.vote.m);
    return state;
}

bool persistence_vote(const std::deque<bool>& history, int j, int m) {
    if (j < 1 || j > m) throw ValidationError("vote requires 1 <= j <= m");
    const std::size_t n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(m));
    int count = 0;
    for (std::size_t i = history.size() - n; i < history.size(); ++i) count += history[i] ? 1 : 0;
    return count >= j;
}

FaultLabel map_fault_type(const PhaseSet& f) {
    switch (f.phase_count()) {
        case 3: return FaultLabel::abc;
        case 2:
            if (f.a && f.b) return f.ground ? FaultLabel::abg : FaultLabel::ab;
            if (f.a && f.c) return f.ground ? FaultLabel::acg : FaultLabel::ac;
            return f.ground ? FaultLabel::bcg : FaultLabel::bc;
        case 1:
            if (!f.ground) return FaultLabel::unknown;
            return f.a ? FaultLabel::ag : (f.b ? FaultLabel::bg : FaultLabel::cg);
        default: return FaultLabel::unknown;
    }
}

GVector initial_previous(const HealthyModel& model) {
    GVector g;
    g.g_a = model.mu_p[0];
    g.g_b = model.mu_p[1];
    g.g_c = model.mu_p[2];
    g.g0 = 0.0;
    return g;
}

LineEngine::LineEngine(const HealthyModel& model, StreamOptions options)
    : model_(model), options_(options), prev_(initial_previous(model)) {
    if (options_.confirm_windows < 1) throw ValidationError("confirm_windows must be at least 1");
    if (options_.label_stability < 1) throw ValidationError("label_stability must be at least 1");
    model_.vote.validate();
    for (int p = 0; p < 3; ++p)
        if (!(model_.sigma_p[p] > 0.0)) throw ConditioningError("per-phase healthy deviation is zero");
}

WindowLog LineEngine::step(const calib::ChannelViews& window, double t_end) {
    GVector gv = calib::score_transformed(window, model_.edges, model_.window.length);
    gv.t_end = t_end;
    const DetectResult det = detect(gv, model_);

    WindowLog log;
    log.t_end = t_end;
    log.d_sq = det.d_sq;
    log.z = z_scores(gv, model_);
    log.g0 = gv.g0;

    above_ = det.tripped ? above_ + 1 : 0;
    if (!tripped_ && above_ >= options_.confirm_windows) {
        tripped_ = true;
        detection_ = DetectionEvent{t_end, det.d_sq, log.z, gv.g0, std::nullopt};
    }
    if (tripped_) {
        flags_ = classify_step(gv, prev_, model_, std::move(flags_));
        log.flags = flags_.now;
        const int have = static_cast<int>(flags_.history[0].size());
        if (have >= model_.vote.j) {
            const FaultLabel vote = map_fault_type(flags_.voted(model_.vote.j, model_.vote.m));
            log.label = vote;
            if (vote != FaultLabel::unknown) last_known_ = vote;
            vote_run_ = (last_vote_ && *last_vote_ == vote) ? vote_run_ + 1 : 1;
            last_vote_ = vote;
            if (!stable_label_ && vote != FaultLabel::unknown && vote_run_ >= options_.label_stability) {
                stable_label_ = vote;
                detection_->label = vote;
            }
        }
    }
    log.tripped = tripped_;
    prev_ = gv;
    return log;
}

std::optional<FaultLabel> LineEngine::reported_label() const { return stable_label_ ? stable_label_ : last_known_; }

std::array<std::vector<double>, 8> transform_record(const WaveformRecord& record) {
    const std::size_t n = record.size();
    for (const auto& ch : record.channels)
        if (ch.size() != n) throw ShapeError("record channels differ in length");
    std::array<std::vector<double>, 8> out;
    for (std::size_t c = 0; c < kPhaseChannels; ++c) out[c] = calib::log_transform(record.channels[c]);
    out[6] = calib::log_transform(
        calib::zero_sequence(record.channels[kIaS], record.channels[kIbS], record.channels[kIcS]));
    out[7] = calib::log_transform(
        calib::zero_sequence(record.channels[kIaR], record.channels[kIbR], record.channels[kIcR]));
    return out;
}

StreamResult run_stream(const WaveformRecord& record, const HealthyModel& model, const StreamOptions& options) {
    if (std::abs(record.sample_rate_hz - model.window.sample_rate_hz) > 1e-9 * model.window.sample_rate_hz)
        throw ValidationError("record sample rate differs from the model");
    const auto windows = calib::make_windows(record.size(), model.window, record.t0_s);
    const auto channels = transform_record(record);
    const auto len = static_cast<std::size_t>(model.window.length);

    LineEngine engine(model, options);
    StreamResult out;
    out.windows.reserve(windows.size());
    for (const auto& w : windows) {
        if (w.start < options.valid_from_sample) continue;
        calib::ChannelViews views;
        for (std::size_t c = 0; c < 8; ++c) views[c] = std::span<const double>(channels[c]).subspan(w.start, len);
        out.windows.push_back(engine.step(views, w.t_end));
    }
    out.detection = engine.detection();
    out.label = engine.reported_label();
    if (out.detection && !out.detection->label) out.detection->label = out.label;
    return out;
}

}  // namespace kldp::engine
