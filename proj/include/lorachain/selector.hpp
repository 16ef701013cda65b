#pragma once

// Picks the (forward, backward) pair for a shape by exact FLOPs or by
// measured time, and plans a whole list of adapted layers.

#include <span>
#include <string>
#include <vector>

#include "lorachain/bench.hpp"
#include "lorachain/costmodel.hpp"
#include "lorachain/plan.hpp"

namespace lorachain {

/// Argmin over FLOPs; ties go to the lowest variant index.
inline PairPlan select_by_flops(const ShapeConfig& c) {
    std::vector<CandidateEvidence> evidence;
    auto pick = [&](auto candidates, auto cost) {
        VariantId best = candidates[0];
        Count best_flops = cost(best, c);
        for (VariantId v : candidates) {
            const Count f = cost(v, c);
            evidence.push_back({v, f, std::nullopt});
            if (f < best_flops) {
                best = v;
                best_flops = f;
            }
        }
        return best;
    };
    const VariantId fwd = pick(kForwardVariants, flops_forward);
    const VariantId bwd = pick(kExecutableBackwardVariants, flops_backward);
    return {c, fwd, bwd, Criterion::flops, std::move(evidence), param_reduction_holds(c)};
}

struct TimedCandidate {
    VariantId variant;
    Count flops;
    double median_ns;
};

/// Fastest median wins. Candidates within 2x clock resolution of the best
/// median count as tied; among those the fewest FLOPs wins, then the
/// earliest entry.
inline std::size_t pick_fastest(std::span<const TimedCandidate> cands, double resolution_ns) {
    if (cands.empty()) throw std::invalid_argument("no candidates to pick from");
    double best_median = cands[0].median_ns;
    for (const auto& c : cands) best_median = std::min(best_median, c.median_ns);
    const double window = best_median + 2.0 * resolution_ns;
    std::size_t best = cands.size();
    for (std::size_t k = 0; k < cands.size(); ++k) {
        if (cands[k].median_ns > window) continue;
        if (best == cands.size() || cands[k].flops < cands[best].flops) best = k;
    }
    return best;
}

/// Times F1, F2 and B1..B5 independently on synthetic data and picks the
/// fastest of each pass.
inline PairPlan select_by_time(const ShapeConfig& c, const BenchConfig& cfg) {
    MeasurementSession session;
    std::vector<VariantId> all(kForwardVariants.begin(), kForwardVariants.end());
    all.insert(all.end(), kExecutableBackwardVariants.begin(), kExecutableBackwardVariants.end());
    const auto stats = detail::time_variants(all, c, cfg);

    std::vector<CandidateEvidence> evidence;
    std::vector<TimedCandidate> fwd, bwd;
    for (std::size_t k = 0; k < all.size(); ++k) {
        const Count f = flops(all[k], c);
        evidence.push_back({all[k], f, stats[k]});
        (pass_of(all[k]) == Pass::forward ? fwd : bwd).push_back({all[k], f, stats[k].median_ns});
    }
    const double res = stats.front().clock_resolution_ns;
    return {c,
            fwd[pick_fastest(fwd, res)].variant,
            bwd[pick_fastest(bwd, res)].variant,
            Criterion::time,
            std::move(evidence),
            param_reduction_holds(c)};
}

struct LayerSpec {
    std::string name;
    std::int64_t in;
    std::int64_t out;
};

struct LayerPlan {
    std::string name;
    PairPlan plan;
    BaselineCosts baseline;
};

/// Per-layer plans plus totals against the cache-XA baseline.
struct ModelPlan {
    std::vector<LayerPlan> layers;
    Count total_plan_flops = 0;
    Count total_baseline_flops = 0;
    Count activation_elements_saved = 0;
    std::size_t layers_without_param_reduction = 0;
};

inline ModelPlan plan_model(std::span<const LayerSpec> layers, std::int64_t b, std::int64_t s,
                            std::int64_t r, Criterion criterion, const BenchConfig& cfg = {}) {
    ModelPlan mp;
    for (const auto& l : layers) {
        const ShapeConfig c(b, s, l.in, l.out, r);
        PairPlan p = criterion == Criterion::flops ? select_by_flops(c) : select_by_time(c, cfg);
        const BaselineCosts base = baseline_costs(c);
        mp.total_plan_flops = checked::add(mp.total_plan_flops, p.total_flops());
        mp.total_baseline_flops =
            checked::add(mp.total_baseline_flops, base.forward_flops, base.backward_flops);
        mp.activation_elements_saved =
            checked::add(mp.activation_elements_saved, base.saved_activation_elements);
        if (!p.parameter_reduction) ++mp.layers_without_param_reduction;
        mp.layers.push_back({l.name, std::move(p), base});
    }
    return mp;
}

} // namespace lorachain
