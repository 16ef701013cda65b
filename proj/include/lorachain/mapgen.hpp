#pragma once

// "Areas of best variant" grids over (embedding x rank) or (batch x seqlen),
// emitted as CSV for external plotting.

#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lorachain/costmodel.hpp"
#include "lorachain/errors.hpp"

namespace lorachain {

/// first, first+step, ... <= last; or first, first*step, ... <= last when
/// geometric.
struct AxisRange {
    Count first = 1;
    Count last = 1;
    Count step = 1;
    bool geometric = false;

    std::vector<Count> values() const {
        if (first < 1 || first > last) throw std::invalid_argument("axis range is empty");
        if (step < 1 || (geometric && step < 2)) throw std::invalid_argument("axis step too small");
        std::vector<Count> out;
        for (Count v = first; v <= last;) {
            out.push_back(v);
            Count next;
            const bool ovf = geometric ? __builtin_mul_overflow(v, step, &next)
                                       : __builtin_add_overflow(v, step, &next);
            if (ovf) break;
            v = next;
        }
        return out;
    }
};

enum class GridAxes { embed_rank, batch_seq };
enum class LayerRule { square, expand4, explicit_dims };

struct GridSpec {
    GridAxes axes = GridAxes::embed_rank;
    /// embed (embed_rank) or batch (batch_seq).
    AxisRange x;
    /// rank (embed_rank) or seqlen (batch_seq).
    AxisRange y;
    LayerRule rule = LayerRule::square;
    // Fixed parameters; which ones matter depends on `axes` and `rule`.
    Count b = 1;
    Count s = 1;
    Count i = 1;
    Count o = 1;
    Count r = 1;

    /// Geometry of the cell at (x, y). Throws OverflowError when o = 4i
    /// overflows.
    ShapeConfig cell_shape(Count xv, Count yv) const {
        const Count in = axes == GridAxes::embed_rank ? xv : i;
        Count out = o;
        if (rule == LayerRule::square) out = in;
        if (rule == LayerRule::expand4) out = checked::mul(4, in);
        const auto sgn = [](Count v) {
            if (v > static_cast<Count>(INT64_MAX)) throw OverflowError("grid value exceeds int64");
            return static_cast<std::int64_t>(v);
        };
        if (axes == GridAxes::embed_rank) return ShapeConfig(sgn(b), sgn(s), sgn(in), sgn(out), sgn(yv));
        return ShapeConfig(sgn(xv), sgn(yv), sgn(in), sgn(out), sgn(r));
    }

    std::string_view x_name() const { return axes == GridAxes::embed_rank ? "embed" : "batch"; }
    std::string_view y_name() const { return axes == GridAxes::embed_rank ? "rank" : "seqlen"; }
};

/// Default resolutions that straddle the visible boundaries.
inline GridSpec default_embed_rank_grid(LayerRule rule, Count b, Count s) {
    GridSpec g;
    g.axes = GridAxes::embed_rank;
    g.x = {256, 8192, 256, false};
    g.y = {8, 4096, 8, false};
    g.rule = rule;
    g.b = b;
    g.s = s;
    return g;
}

inline GridSpec default_batch_seq_grid(Count i, Count o, Count r) {
    GridSpec g;
    g.axes = GridAxes::batch_seq;
    g.x = {1, 64, 1, false};
    g.y = {64, 2048, 64, false};
    g.rule = LayerRule::explicit_dims;
    g.i = i;
    g.o = o;
    g.r = r;
    return g;
}

struct AreaCell {
    Count x;
    Count y;
    /// Empty when the cell overflowed.
    std::optional<VariantId> best;
    std::optional<bool> param_reduction;
    Count flops_best = 0;
    std::vector<Count> flops_all; // one per candidate, candidate order
};

struct AreaMap {
    GridSpec spec;
    Pass pass;
    std::vector<VariantId> candidates;
    std::vector<AreaCell> cells; // x-major, y-minor
};

inline std::vector<VariantId> map_candidates(Pass pass) {
    if (pass == Pass::forward) return {kForwardVariants.begin(), kForwardVariants.end()};
    return {kExecutableBackwardVariants.begin(), kExecutableBackwardVariants.end()};
}

/// One cell, computed the same way select_by_flops would choose.
inline AreaCell compute_cell(const GridSpec& spec, Pass pass, Count xv, Count yv) {
    AreaCell cell{xv, yv, std::nullopt, std::nullopt, 0, {}};
    try {
        const ShapeConfig c = spec.cell_shape(xv, yv);
        std::vector<Count> all;
        VariantId best{};
        Count best_flops = 0;
        for (VariantId v : map_candidates(pass)) {
            const Count f = flops(v, c);
            if (all.empty() || f < best_flops) {
                best = v;
                best_flops = f;
            }
            all.push_back(f);
        }
        cell.param_reduction = param_reduction_holds(c);
        cell.best = best;
        cell.flops_best = best_flops;
        cell.flops_all = std::move(all);
    } catch (const OverflowError&) {
        cell = AreaCell{xv, yv, std::nullopt, std::nullopt, 0, {}};
    }
    return cell;
}

inline AreaMap area_map(const GridSpec& spec, Pass pass) {
    AreaMap m{spec, pass, map_candidates(pass), {}};
    const auto xs = spec.x.values();
    const auto ys = spec.y.values();
    m.cells.reserve(xs.size() * ys.size());
    for (Count xv : xs)
        for (Count yv : ys) m.cells.push_back(compute_cell(spec, pass, xv, yv));
    return m;
}

/// Header `x,y,variant,param_reduction,flops_best,flops_<V>...`, one row per
/// cell, '\n' line ends. Overflowed cells read `invalid` with empty numbers.
inline void emit_csv(const AreaMap& m, std::ostream& out) {
    out << "x,y,variant,param_reduction,flops_best";
    for (VariantId v : m.candidates) out << ",flops_" << short_name(v);
    out << '\n';
    for (const auto& c : m.cells) {
        out << c.x << ',' << c.y << ',';
        if (!c.best) {
            out << "invalid,,";
            for (std::size_t k = 0; k < m.candidates.size(); ++k) out << ',';
            out << '\n';
            continue;
        }
        out << short_name(*c.best) << ',' << (*c.param_reduction ? 1 : 0) << ',' << c.flops_best;
        for (Count f : c.flops_all) out << ',' << f;
        out << '\n';
    }
    if (!out) throw IoError("failed writing CSV");
}

inline void emit_csv(const AreaMap& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    emit_csv(m, static_cast<std::ostream&>(f));
    f.close();
    if (!f) throw IoError("failed writing " + path);
}

} // namespace lorachain
