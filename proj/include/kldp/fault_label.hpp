#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace kldp {

/// The ten shunt-fault classes plus `unknown` for flag patterns that do not map.
enum class FaultLabel { ag, bg, cg, ab, ac, bc, abg, acg, bcg, abc, unknown };

inline constexpr std::array<FaultLabel, 10> kFaultClasses = {
    FaultLabel::ag, FaultLabel::bg,  FaultLabel::cg,  FaultLabel::ab,  FaultLabel::ac,
    FaultLabel::bc, FaultLabel::abg, FaultLabel::acg, FaultLabel::bcg, FaultLabel::abc};

struct PhaseSet {
    bool a = false;
    bool b = false;
    bool c = false;
    bool ground = false;

    int phase_count() const { return int(a) + int(b) + int(c); }
    bool operator==(const PhaseSet&) const = default;
};

std::string_view to_string(FaultLabel label);
std::optional<FaultLabel> parse_fault_label(std::string_view text);

/// Phases and ground involvement of a class; `abc` reports no ground.
PhaseSet involvement(FaultLabel label);

/// Index into kFaultClasses, or -1 for unknown.
int class_index(FaultLabel label);

}  // namespace kldp
