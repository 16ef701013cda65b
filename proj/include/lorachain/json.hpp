#pragma once

// nlohmann/json conversions for the report types the CLI prints.

#include <json.hpp>

#include "lorachain/bench.hpp"
#include "lorachain/costmodel.hpp"
#include "lorachain/plan.hpp"
#include "lorachain/selector.hpp"

namespace lorachain {

inline nlohmann::json to_json(const ShapeConfig& c) {
    return {{"b", c.b()}, {"s", c.s()}, {"i", c.i()}, {"o", c.o()}, {"r", c.r()}};
}

inline ShapeConfig shape_from_json(const nlohmann::json& j) {
    return ShapeConfig(j.at("b").get<std::int64_t>(), j.at("s").get<std::int64_t>(),
                       j.at("i").get<std::int64_t>(), j.at("o").get<std::int64_t>(),
                       j.at("r").get<std::int64_t>());
}

inline nlohmann::json to_json(const TimingStats& t) {
    nlohmann::json j{{"median_ns", t.median_ns}, {"mean_ns", t.mean_ns},
                     {"std_ns", t.std_ns},       {"min_ns", t.min_ns},
                     {"samples", t.samples},     {"clock_resolution_ns", t.clock_resolution_ns}};
    j["warning"] = t.warning ? nlohmann::json(*t.warning) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const BaselineCosts& b) {
    return {{"forward_flops", b.forward_flops},
            {"backward_flops", b.backward_flops},
            {"saved_activation_elements", b.saved_activation_elements}};
}

/// `flops` maps forward1..backward8 to exact counts; `workspace_elements`
/// covers the executable variants only.
inline nlohmann::json to_json(const CostReport& r) {
    nlohmann::json flops = nlohmann::json::object();
    nlohmann::json ws = nlohmann::json::object();
    for (const auto& v : r.variants) {
        flops[long_name(v.variant)] = v.flops;
        if (v.workspace_elements) ws[long_name(v.variant)] = *v.workspace_elements;
    }
    return {{"shape", to_json(r.shape)},
            {"flops", flops},
            {"workspace_elements", ws},
            {"baseline", to_json(r.baseline)},
            {"activation_elements_saved", r.activation_elements_saved},
            {"param_reduction", r.param_reduction}};
}

inline nlohmann::json to_json(const PairPlan& p) {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : p.evidence) {
        nlohmann::json j{{"variant", short_name(e.variant)}, {"flops", e.flops}};
        if (e.timing) j["timing"] = to_json(*e.timing);
        ev.push_back(std::move(j));
    }
    return {{"shape", to_json(p.shape)},
            {"forward_choice", short_name(p.forward_choice)},
            {"backward_choice", short_name(p.backward_choice)},
            {"criterion", criterion_name(p.criterion)},
            {"evidence", ev},
            {"parameter_reduction", p.parameter_reduction},
            {"total_flops", p.total_flops()}};
}

inline nlohmann::json to_json(const ModelPlan& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        layers.push_back({{"name", l.name}, {"plan", to_json(l.plan)}, {"baseline", to_json(l.baseline)}});
    }
    return {{"layers", layers},
            {"total_plan_flops", m.total_plan_flops},
            {"total_baseline_flops", m.total_baseline_flops},
            {"activation_elements_saved", m.activation_elements_saved},
            {"layers_without_param_reduction", m.layers_without_param_reduction}};
}

inline nlohmann::json to_json(const SpeedupReport& s) {
    return {{"shape", to_json(s.shape)},
            {"forward_choice", short_name(s.forward_choice)},
            {"backward_choice", short_name(s.backward_choice)},
            {"plan", to_json(s.plan)},
            {"baseline", to_json(s.baseline)},
            {"measured_speedup_percent", s.measured_speedup_percent},
            {"predicted_speedup_percent", s.predicted_speedup_percent},
            {"plan_flops", s.plan_flops},
            {"baseline_flops", s.baseline_flops},
            {"activation_elements_saved", s.activation_elements_saved}};
}

/// Inverse of to_json(PairPlan); throws on unknown variant or criterion names.
inline PairPlan plan_from_json(const nlohmann::json& j) {
    auto variant = [](const nlohmann::json& v) {
        auto parsed = parse_variant(v.get<std::string>());
        if (!parsed) throw Error("unknown variant " + v.get<std::string>());
        return *parsed;
    };
    auto crit = parse_criterion(j.at("criterion").get<std::string>());
    if (!crit) throw Error("unknown criterion");
    std::vector<CandidateEvidence> ev;
    for (const auto& e : j.at("evidence")) {
        CandidateEvidence ce{variant(e.at("variant")), e.at("flops").get<Count>(), std::nullopt};
        if (e.contains("timing")) {
            const auto& t = e.at("timing");
            TimingStats ts;
            ts.median_ns = t.at("median_ns");
            ts.mean_ns = t.at("mean_ns");
            ts.std_ns = t.at("std_ns");
            ts.min_ns = t.at("min_ns");
            ts.samples = t.at("samples");
            ts.clock_resolution_ns = t.at("clock_resolution_ns");
            if (!t.at("warning").is_null()) ts.warning = t.at("warning").get<std::string>();
            ce.timing = ts;
        }
        ev.push_back(std::move(ce));
    }
    return {shape_from_json(j.at("shape")), variant(j.at("forward_choice")),
            variant(j.at("backward_choice")), *crit, std::move(ev),
            j.at("parameter_reduction").get<bool>()};
}

} // namespace lorachain
