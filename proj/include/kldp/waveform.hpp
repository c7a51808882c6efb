#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace kldp {

/// Channel order of a two-terminal three-phase record.
enum Channel : std::size_t { kIaS = 0, kIbS, kIcS, kIaR, kIbR, kIcR };

inline constexpr std::size_t kPhaseChannels = 6;

/// Time-aligned sending/receiving phase currents (amperes) on a uniform grid.
/// Sample n is taken at t0_s + n / sample_rate_hz.
struct WaveformRecord {
    double sample_rate_hz = 10000.0;
    double t0_s = 0.0;
    std::array<std::vector<double>, kPhaseChannels> channels;

    std::size_t size() const { return channels[0].size(); }
    double time_at(std::size_t n) const { return t0_s + static_cast<double>(n) / sample_rate_hz; }
};

}  // namespace kldp
