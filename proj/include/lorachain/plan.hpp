#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lorachain/costmodel.hpp"

namespace lorachain {

/// Timing summary of one measured body, in nanoseconds.
struct TimingStats {
    double median_ns = 0.0;
    double mean_ns = 0.0;
    double std_ns = 0.0;
    double min_ns = 0.0;
    std::size_t samples = 0;
    double clock_resolution_ns = 0.0;
    /// Set when the clock resolution is coarser than median / 100.
    std::optional<std::string> warning;
};

enum class Criterion { flops, time };

inline std::string_view criterion_name(Criterion c) { return c == Criterion::flops ? "flops" : "time"; }

inline std::optional<Criterion> parse_criterion(std::string_view s) {
    if (s == "flops") return Criterion::flops;
    if (s == "time") return Criterion::time;
    return std::nullopt;
}

struct CandidateEvidence {
    VariantId variant;
    Count flops;
    std::optional<TimingStats> timing; // only for Criterion::time
};

/// Chosen (forward, backward) pair for one shape plus the evidence for every
/// candidate considered (F1, F2, B1..B5).
struct PairPlan {
    ShapeConfig shape;
    VariantId forward_choice;
    VariantId backward_choice;
    Criterion criterion;
    std::vector<CandidateEvidence> evidence;
    bool parameter_reduction;

    Count forward_flops() const { return flops_forward(forward_choice, shape); }
    Count backward_flops() const { return flops_backward(backward_choice, shape); }
    Count total_flops() const { return checked::add(forward_flops(), backward_flops()); }
};

} // namespace lorachain
