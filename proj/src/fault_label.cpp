#include "kldp/fault_label.hpp"

namespace kldp {

std::string_view to_string(FaultLabel label) {
    switch (label) {
        case FaultLabel::ag: return "ag";
        case FaultLabel::bg: return "bg";
        case FaultLabel::cg: return "cg";
        case FaultLabel::ab: return "ab";
        case FaultLabel::ac: return "ac";
        case FaultLabel::bc: return "bc";
        case FaultLabel::abg: return "abg";
        case FaultLabel::acg: return "acg";
        case FaultLabel::bcg: return "bcg";
        case FaultLabel::abc: return "abc";
        case FaultLabel::unknown: return "unknown";
    }
    return "unknown";
}

std::optional<FaultLabel> parse_fault_label(std::string_view text) {
    for (FaultLabel l : kFaultClasses) {
        if (to_string(l) == text) return l;
    }
    if (text == "unknown") return FaultLabel::unknown;
    return std::nullopt;
}

PhaseSet involvement(FaultLabel label) {
    PhaseSet s;
    const std::string_view name = to_string(label);
    if (label == FaultLabel::unknown) return s;
    for (char ch : name) {
        if (ch == 'a') s.a = true;
        if (ch == 'b') s.b = true;
        if (ch == 'c') s.c = true;
        if (ch == 'g') s.ground = true;
    }
    return s;
}

int class_index(FaultLabel label) {
    for (std::size_t i = 0; i < kFaultClasses.size(); ++i) {
        if (kFaultClasses[i] == label) return static_cast<int>(i);
    }
    return -1;
}

}  // namespace kldp
