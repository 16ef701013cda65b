#pragma once

// Exact integer FLOP model for the LoRA forward/backward bracketings, the
// parameter-reduction predicate, workspace accounting and the baseline
// (cache-XA) execution model.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lorachain/errors.hpp"

namespace lorachain {

using Count = std::uint64_t;

namespace checked {

inline Count mul(Count a, Count b) {
    Count out;
    if (__builtin_mul_overflow(a, b, &out)) throw OverflowError("integer overflow in cost model");
    return out;
}

inline Count add(Count a, Count b) {
    Count out;
    if (__builtin_add_overflow(a, b, &out)) throw OverflowError("integer overflow in cost model");
    return out;
}

inline Count sub(Count a, Count b) {
    if (b > a) throw OverflowError("integer underflow in cost model");
    return a - b;
}

template <typename... Ts>
Count mul(Count a, Count b, Ts... rest) {
    return mul(mul(a, b), rest...);
}

template <typename... Ts>
Count add(Count a, Count b, Ts... rest) {
    return add(add(a, b), rest...);
}

} // namespace checked

/// Layer/batch geometry: batch size, sequence length, input and output
/// dimension and adapter rank. All five are >= 1.
class ShapeConfig {
public:
    ShapeConfig(std::int64_t b, std::int64_t s, std::int64_t i, std::int64_t o, std::int64_t r)
        : b_(positive(b, "b")), s_(positive(s, "s")), i_(positive(i, "i")), o_(positive(o, "o")),
          r_(positive(r, "r")) {}

    Count b() const noexcept { return b_; }
    Count s() const noexcept { return s_; }
    Count i() const noexcept { return i_; }
    Count o() const noexcept { return o_; }
    Count r() const noexcept { return r_; }

    /// Rows of the flattened (b*s) x i input.
    Count tokens() const { return checked::mul(b_, s_); }

    std::string to_string() const {
        return "b=" + std::to_string(b_) + " s=" + std::to_string(s_) + " i=" +
               std::to_string(i_) + " o=" + std::to_string(o_) + " r=" + std::to_string(r_);
    }

    friend bool operator==(const ShapeConfig&, const ShapeConfig&) = default;

private:
    static Count positive(std::int64_t v, const char* name) {
        if (v < 1) {
            throw ShapeError(std::string("shape parameter ") + name + " must be >= 1, got " +
                             std::to_string(v));
        }
        return static_cast<Count>(v);
    }

    Count b_, s_, i_, o_, r_;
};

enum class Pass { forward, backward };

/// Forward (F1, F2) and backward (B1..B8) bracketings. B6..B8 exist only in
/// the cost model.
enum class VariantId : std::uint8_t { F1, F2, B1, B2, B3, B4, B5, B6, B7, B8 };

inline constexpr std::array<VariantId, 2> kForwardVariants{VariantId::F1, VariantId::F2};
inline constexpr std::array<VariantId, 8> kAllBackwardVariants{
    VariantId::B1, VariantId::B2, VariantId::B3, VariantId::B4,
    VariantId::B5, VariantId::B6, VariantId::B7, VariantId::B8};
inline constexpr std::array<VariantId, 5> kExecutableBackwardVariants{
    VariantId::B1, VariantId::B2, VariantId::B3, VariantId::B4, VariantId::B5};

constexpr Pass pass_of(VariantId v) noexcept {
    return v <= VariantId::F2 ? Pass::forward : Pass::backward;
}

/// 1-based index within the pass (F2 -> 2, B5 -> 5).
constexpr int variant_index(VariantId v) noexcept {
    const int raw = static_cast<int>(v);
    return pass_of(v) == Pass::forward ? raw + 1 : raw - 1;
}

constexpr bool is_executable(VariantId v) noexcept { return v <= VariantId::B5; }

inline std::string short_name(VariantId v) {
    return (pass_of(v) == Pass::forward ? "F" : "B") + std::to_string(variant_index(v));
}

/// "forward1" ... "backward8".
inline std::string long_name(VariantId v) {
    return (pass_of(v) == Pass::forward ? "forward" : "backward") +
           std::to_string(variant_index(v));
}

inline std::string_view pass_name(Pass p) { return p == Pass::forward ? "forward" : "backward"; }

inline std::optional<VariantId> parse_variant(std::string_view name) {
    for (int k = 0; k <= static_cast<int>(VariantId::B8); ++k) {
        const auto v = static_cast<VariantId>(k);
        if (name == short_name(v) || name == long_name(v)) return v;
    }
    return std::nullopt;
}

inline Count flops_forward(VariantId v, const ShapeConfig& c) {
    using namespace checked;
    const Count bs = c.tokens();
    const Count i = c.i(), o = c.o(), r = c.r();
    switch (v) {
    case VariantId::F1: // 2bs(io + ri + or)
        return mul(2, bs, add(mul(i, o), mul(r, i), mul(o, r)));
    case VariantId::F2: // 2(ior + bs*oi)
        return mul(2, add(mul(i, o, r), mul(bs, o, i)));
    default:
        throw UnsupportedVariantError(short_name(v) + " is not a forward variant");
    }
}

inline Count flops_backward(VariantId v, const ShapeConfig& c) {
    using namespace checked;
    const Count bs = c.tokens();
    const Count i = c.i(), o = c.o(), r = c.r();
    const Count io = mul(i, o), ir = mul(i, r), or_ = mul(o, r);
    const Count ior = mul(io, r);
    switch (v) {
    case VariantId::B1: // 2bs(2or + 3ir + oi)
        return mul(2, bs, add(mul(2, or_), mul(3, ir), io));
    case VariantId::B2: // 2bs(or + 2ir + 2io) + 2ior
        return add(mul(2, bs, add(or_, mul(2, ir), mul(2, io))), mul(2, ior));
    case VariantId::B3: // 2bs(2io + or + ir) + 4ior
    case VariantId::B7:
    case VariantId::B8:
        return add(mul(2, bs, add(mul(2, io), or_, ir)), mul(4, ior));
    case VariantId::B4: // 2(2bs*io + 3ior)
        return mul(2, add(mul(2, bs, io), mul(3, ior)));
    case VariantId::B5: // 2bs(2or + 2ir + oi) + 2ior
        return add(mul(2, bs, add(mul(2, or_), mul(2, ir), io)), mul(2, ior));
    case VariantId::B6: // 2bs(2or + 2ir + 2oi) + 4ior
        return add(mul(2, bs, add(mul(2, or_), mul(2, ir), mul(2, io))), mul(4, ior));
    default:
        throw UnsupportedVariantError(short_name(v) + " is not a backward variant");
    }
}

inline Count flops(VariantId v, const ShapeConfig& c) {
    return pass_of(v) == Pass::forward ? flops_forward(v, c) : flops_backward(v, c);
}

/// r(i + o) < io: the adapter trains fewer parameters than the layer it adapts.
inline bool param_reduction_holds(const ShapeConfig& c) {
    using namespace checked;
    return mul(c.r(), add(c.i(), c.o())) < mul(c.i(), c.o());
}

/// Temporary elements materialized inside a variant (operands and outputs
/// excluded).
inline Count workspace_elements(VariantId v, const ShapeConfig& c) {
    using namespace checked;
    const Count bsr = mul(c.tokens(), c.r());
    const Count io = mul(c.i(), c.o());
    switch (v) {
    case VariantId::F1: return bsr;
    case VariantId::F2: return io;
    case VariantId::B1: return mul(2, bsr);
    case VariantId::B2:
    case VariantId::B3: return add(bsr, io);
    case VariantId::B4: return mul(2, io);
    case VariantId::B5: return add(mul(2, bsr), io);
    default:
        throw UnsupportedVariantError(short_name(v) +
                                      " has no executable graph, so no workspace");
    }
}

/// Bytes of the XA activation a cache-XA forward keeps per adapted layer and
/// this library does not. A per-layer lower bound: optimizer state and
/// autocast copies are not modeled.
inline Count activation_memory_saved(const ShapeConfig& c, Count bytes_per_element) {
    return checked::mul(c.tokens(), c.r(), bytes_per_element);
}

struct BaselineCosts {
    Count forward_flops;
    Count backward_flops;
    Count saved_activation_elements;
};

/// Default autograd execution: F1 caching XA, then B1 reusing the cache
/// (the 2bs*ir recompute of XA disappears).
inline BaselineCosts baseline_costs(const ShapeConfig& c) {
    using namespace checked;
    const Count recompute = mul(2, c.tokens(), c.i(), c.r());
    return {flops_forward(VariantId::F1, c), sub(flops_backward(VariantId::B1, c), recompute),
            mul(c.tokens(), c.r())};
}

struct VariantCost {
    VariantId variant;
    Count flops;
    std::optional<Count> workspace_elements; // empty for B6..B8
};

/// Everything the cost model knows about one shape.
struct CostReport {
    ShapeConfig shape;
    std::vector<VariantCost> variants; // F1, F2, B1..B8 in order
    BaselineCosts baseline;
    Count activation_elements_saved;
    bool param_reduction;

    Count flops_of(VariantId v) const {
        for (const auto& vc : variants)
            if (vc.variant == v) return vc.flops;
        throw UnsupportedVariantError("no cost recorded for " + short_name(v));
    }
};

inline CostReport cost_report(const ShapeConfig& c) {
    std::vector<VariantCost> vs;
    for (VariantId v : kForwardVariants) vs.push_back({v, flops_forward(v, c), workspace_elements(v, c)});
    for (VariantId v : kAllBackwardVariants) {
        std::optional<Count> ws;
        if (is_executable(v)) ws = workspace_elements(v, c);
        vs.push_back({v, flops_backward(v, c), ws});
    }
    const BaselineCosts base = baseline_costs(c);
    return {c, std::move(vs), base, base.saved_activation_elements, param_reduction_holds(c)};
}

} // namespace lorachain
