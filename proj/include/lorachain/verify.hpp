#pragma once

// Self-check battery behind `lorachain verify`: gradient equivalence,
// finite differences, dominance relations and the executed-FLOP audit.

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "lorachain/costmodel.hpp"
#include "lorachain/dense.hpp"
#include "lorachain/variants.hpp"

namespace lorachain {

struct VerifyOptions {
    std::size_t trials = 200;
    std::uint64_t seed = 1;
    double tol = 1e-10;
    double forward_tol = 1e-12;
    std::size_t fd_trials = 20;
    double fd_step = 1e-5;
    double fd_tol = 1e-6;
    std::size_t dominance_samples = 100000;
};

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

struct CheckResult {
    std::string name;
    bool passed;
    double worst;    // worst observed error, or exception count
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

/// Random high-precision problem with every dimension in [1, max_dim] and
/// b*s <= max_tokens. Entries are uniform in [-1, 1], or [0, 1] when
/// `nonnegative` is set.
struct RandomProblem {
    ShapeConfig shape;
    Matrix<double> x;
    LoraLayer<double> layer;
    Matrix<double> dy;
};

inline RandomProblem random_problem(std::mt19937_64& rng, std::int64_t max_dim, std::int64_t max_tokens,
                                    bool nonnegative = false) {
    std::uniform_int_distribution<std::int64_t> dim(1, max_dim);
    std::uniform_int_distribution<std::int64_t> batch(1, std::min<std::int64_t>(8, max_tokens));
    const std::int64_t b = batch(rng);
    std::uniform_int_distribution<std::int64_t> seq(1, max_tokens / b);
    const ShapeConfig c(b, seq(rng), dim(rng), dim(rng), dim(rng));
    const std::uint64_t seed = rng();
    const auto t = static_cast<std::size_t>(c.tokens());
    const auto i = static_cast<std::size_t>(c.i()), o = static_cast<std::size_t>(c.o()),
               r = static_cast<std::size_t>(c.r());
    auto x = fill_random(t, i, seed);
    auto layer = random_layer(i, o, r, seed + 1);
    auto dy = fill_random(t, o, seed + 4);
    if (nonnegative) {
        x = abs_entries(std::move(x));
        layer = LoraLayer<double>(abs_entries(layer.w()), abs_entries(layer.a()), abs_entries(layer.b()));
        dy = abs_entries(std::move(dy));
    }
    return {c, std::move(x), std::move(layer), std::move(dy)};
}

/// Worst differences of every executable variant against the reference.
struct EquivalenceErrors {
    double backward_rel = 0.0;    // max_rel_diff, backward
    double forward_rel = 0.0;     // max_rel_diff, F1 vs F2
    double backward_scaled = 0.0; // max_scaled_diff against |.|-magnitudes
    double forward_scaled = 0.0;
};

inline void accumulate_equivalence(const RandomProblem& p, EquivalenceErrors& e) {
    const auto ref = reference_backward(p.x, p.layer, p.dy);
    const Matrix<double> ax = abs_entries(p.x), ady = abs_entries(p.dy);
    const LoraLayer<double> al(abs_entries(p.layer.w()), abs_entries(p.layer.a()), abs_entries(p.layer.b()));
    const auto mag = reference_backward(ax, al, ady);
    for (VariantId v : kExecutableBackwardVariants) {
        const auto g = backward(v, p.x, p.layer, p.dy);
        e.backward_rel = std::max({e.backward_rel, max_rel_diff(g.dA, ref.dA), max_rel_diff(g.dB, ref.dB),
                                   max_rel_diff(g.dX, ref.dX)});
        e.backward_scaled =
            std::max({e.backward_scaled, max_scaled_diff(g.dA, ref.dA, mag.dA),
                      max_scaled_diff(g.dB, ref.dB, mag.dB), max_scaled_diff(g.dX, ref.dX, mag.dX)});
    }
    const auto y1 = forward(VariantId::F1, p.x, p.layer);
    const auto y2 = forward(VariantId::F2, p.x, p.layer);
    e.forward_rel = std::max(e.forward_rel, max_rel_diff(y1, y2));
    e.forward_scaled = std::max(e.forward_scaled, max_scaled_diff(y1, y2, forward(VariantId::F1, ax, al)));
}

/// Two regimes, both at the same tolerances:
///  - nonnegative operands, elementwise max_rel_diff (no cancellation, so
///    the rounding budget holds per element);
///  - signed operands, componentwise error over |X||W| + |X||A||B| style
///    magnitudes. Signed max_rel_diff is reported but not gated: an output
///    element that cancels to near zero makes it unbounded.
inline CheckResult check_gradient_equivalence(const VerifyOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    EquivalenceErrors pos, sgn;
    for (std::size_t t = 0; t < opt.trials; ++t) {
        accumulate_equivalence(random_problem(rng, 64, 64, true), pos);
        accumulate_equivalence(random_problem(rng, 64, 64, false), sgn);
    }
    const bool ok = pos.backward_rel <= opt.tol && pos.forward_rel <= opt.forward_tol &&
                    sgn.backward_scaled <= opt.tol && sgn.forward_scaled <= opt.forward_tol;
    return {"gradient_equivalence", ok, std::max(pos.backward_rel, sgn.backward_scaled),
            "trials=" + std::to_string(opt.trials) + " nonneg_rel bwd=" + sci(pos.backward_rel) +
                " fwd=" + sci(pos.forward_rel) + "; signed_componentwise bwd=" + sci(sgn.backward_scaled) +
                " fwd=" + sci(sgn.forward_scaled) + "; signed_rel (ungated) bwd=" + sci(sgn.backward_rel) +
                " fwd=" + sci(sgn.forward_rel)};
}

inline CheckResult check_finite_differences(const VerifyOptions& opt) {
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    double worst = 0.0;
    for (std::size_t t = 0; t < opt.fd_trials; ++t) {
        const auto p = random_problem(rng, 8, 8);
        for (VariantId v : kExecutableBackwardVariants)
            worst = std::max(worst, finite_difference_check(p.x, p.layer, p.dy, opt.fd_step, v).worst());
    }
    return {"finite_differences", worst <= opt.fd_tol, worst,
            "trials=" + std::to_string(opt.fd_trials) + " worst=" + sci(worst)};
}

inline CheckResult check_dominance(const VerifyOptions& opt) {
    std::mt19937_64 rng(opt.seed + 17);
    std::uniform_int_distribution<std::int64_t> dim(1, 16384), tok(1, 4096);
    std::size_t violations = 0;
    for (std::size_t t = 0; t < opt.dominance_samples; ++t) {
        const ShapeConfig c(tok(rng), tok(rng), dim(rng), dim(rng), dim(rng));
        const Count b3 = flops_backward(VariantId::B3, c);
        if (!(flops_backward(VariantId::B6, c) > flops_backward(VariantId::B5, c))) ++violations;
        if (flops_backward(VariantId::B7, c) != b3 || flops_backward(VariantId::B8, c) != b3) ++violations;
    }
    // Constrained shapes: r drawn from [1, rmax] so that r(i + o) < io.
    std::size_t constrained = 0;
    while (constrained < opt.dominance_samples) {
        const std::int64_t i = dim(rng), o = dim(rng);
        const std::int64_t rmax = (i * o - 1) / (i + o);
        if (rmax < 1) continue;
        std::uniform_int_distribution<std::int64_t> rank(1, rmax);
        const ShapeConfig c(tok(rng), tok(rng), i, o, rank(rng));
        ++constrained;
        const Count b5 = flops_backward(VariantId::B5, c);
        if (!(flops_backward(VariantId::B2, c) > b5) || !(flops_backward(VariantId::B3, c) > b5)) ++violations;
    }
    return {"dominance", violations == 0, double(violations),
            "unconstrained=" + std::to_string(opt.dominance_samples) +
                " constrained=" + std::to_string(constrained) + " violations=" + std::to_string(violations)};
}

inline CheckResult check_flop_audit(const VerifyOptions& opt) {
    const ShapeConfig shapes[] = {
        {1, 1, 1, 1, 1}, {2, 3, 5, 7, 2}, {1, 6, 8, 32, 4}, {4, 4, 17, 9, 12}, {3, 5, 64, 16, 1}};
    std::size_t mismatches = 0;
    for (const auto& s : shapes) {
        const auto t = static_cast<std::size_t>(s.tokens());
        const auto x = fill_random(t, s.i(), opt.seed);
        const auto layer = random_layer(s.i(), s.o(), s.r(), opt.seed + 1);
        const auto dy = fill_random(t, s.o(), opt.seed + 4);
        for (VariantId v : kForwardVariants) {
            ExecStats st;
            (void)forward(v, x, layer, Exec{&st, 1});
            mismatches += st.flops != flops_forward(v, s);
        }
        for (VariantId v : kExecutableBackwardVariants) {
            ExecStats st;
            (void)backward(v, x, layer, dy, Exec{&st, 1});
            mismatches += st.flops != flops_backward(v, s);
        }
    }
    return {"flop_audit", mismatches == 0, double(mismatches),
            "shapes=5 mismatches=" + std::to_string(mismatches)};
}

inline VerifyReport run_verification(const VerifyOptions& opt) {
    VerifyReport rep;
    rep.checks.push_back(check_gradient_equivalence(opt));
    rep.checks.push_back(check_finite_differences(opt));
    rep.checks.push_back(check_dominance(opt));
    rep.checks.push_back(check_flop_audit(opt));
    return rep;
}

} // namespace lorachain
