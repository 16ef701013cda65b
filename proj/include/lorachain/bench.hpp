#pragma once

// Microbenchmark harness: warmup + repeated monotonic-clock timing of a
// variant body on synthetic operands, and plan-vs-baseline comparison.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lorachain/costmodel.hpp"
#include "lorachain/dense.hpp"
#include "lorachain/plan.hpp"
#include "lorachain/variants.hpp"

namespace lorachain {

enum class Precision { high, single };

struct BenchConfig {
    std::size_t warmup_iters = 2;
    std::size_t repeat_iters = 7;
    std::uint64_t seed = 0;
    Precision precision = Precision::single;
    bool single_thread = true;

    void validate() const {
        if (repeat_iters < 3) throw std::invalid_argument("repeat_iters must be >= 3");
    }
};

/// Synthetic operands for one shape. Seeds: X <- seed, layer <- seed + 1
/// (W, A, B take seed + 1, + 2, + 3), dY <- seed + 4.
template <typename T>
struct Problem {
    Matrix<T> x;
    LoraLayer<T> layer;
    Matrix<T> dy;
};

template <typename T>
Problem<T> make_problem(const ShapeConfig& c, std::uint64_t seed) {
    const auto bs = static_cast<std::size_t>(c.tokens());
    const auto i = static_cast<std::size_t>(c.i());
    const auto o = static_cast<std::size_t>(c.o());
    const auto r = static_cast<std::size_t>(c.r());
    try {
        return {fill_random<T>(bs, i, seed), random_layer<T>(i, o, r, seed + 1),
                fill_random<T>(bs, o, seed + 4)};
    } catch (const std::bad_alloc&) {
        throw Error("cannot allocate operands for " + c.to_string());
    }
}

namespace detail {

inline std::mutex& session_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// Exclusive right to time things. A second concurrent session throws.
class MeasurementSession {
public:
    MeasurementSession() : lock_(detail::session_mutex(), std::try_to_lock) {
        if (!lock_.owns_lock()) throw MeasurementError("another measurement session is active");
    }

private:
    std::unique_lock<std::mutex> lock_;
};

/// Smallest observable positive tick of steady_clock, in nanoseconds.
inline double clock_resolution_ns() {
    using clock = std::chrono::steady_clock;
    static_assert(clock::is_steady);
    auto best = clock::duration::max();
    for (int trial = 0; trial < 64; ++trial) {
        const auto t0 = clock::now();
        auto t1 = t0;
        for (int spin = 0; spin < 1'000'000 && t1 == t0; ++spin) t1 = clock::now();
        if (t1 < t0) throw MeasurementError("steady clock went backwards");
        if (t1 > t0) best = std::min(best, t1 - t0);
    }
    if (best == clock::duration::max()) throw MeasurementError("clock never advanced");
    return std::chrono::duration<double, std::nano>(best).count();
}

/// Summary statistics over raw samples (ns). Standard deviation is the
/// sample (n - 1) estimate.
inline TimingStats summarize(std::vector<double> samples, double resolution_ns) {
    if (samples.empty()) throw MeasurementError("no timing samples");
    TimingStats st;
    st.samples = samples.size();
    st.clock_resolution_ns = resolution_ns;
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    st.min_ns = samples.front();
    st.median_ns = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    st.mean_ns = std::accumulate(samples.begin(), samples.end(), 0.0) / double(n);
    double ss = 0.0;
    for (double s : samples) ss += (s - st.mean_ns) * (s - st.mean_ns);
    st.std_ns = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
    if (resolution_ns > st.median_ns / 100.0) {
        st.warning = "clock resolution " + std::to_string(resolution_ns) +
                     " ns is coarser than 1% of the median";
    }
    return st;
}

namespace detail {

// Times `bodies` in interleaved order; returns one sample vector per body.
inline std::vector<std::vector<double>> time_bodies(const std::vector<std::function<void()>>& bodies,
                                                    const BenchConfig& cfg) {
    using clock = std::chrono::steady_clock;
    for (std::size_t w = 0; w < cfg.warmup_iters; ++w)
        for (const auto& body : bodies) body();
    std::vector<std::vector<double>> samples(bodies.size());
    for (auto& s : samples) s.reserve(cfg.repeat_iters);
    for (std::size_t rep = 0; rep < cfg.repeat_iters; ++rep) {
        for (std::size_t k = 0; k < bodies.size(); ++k) {
            const auto t0 = clock::now();
            bodies[k]();
            const auto t1 = clock::now();
            if (t1 <= t0) throw MeasurementError("non-positive timing sample");
            samples[k].push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
    }
    return samples;
}

template <typename T>
std::function<void()> variant_body(VariantId v, const Problem<T>& p, const Exec& exec) {
    if (!is_executable(v))
        throw UnsupportedVariantError(short_name(v) + " cannot be timed");
    if (pass_of(v) == Pass::forward) {
        return [v, &p, exec] {
            const auto y = forward(v, p.x, p.layer, exec);
            volatile T sink = y.data()[0];
            (void)sink;
        };
    }
    return [v, &p, exec] {
        const auto g = backward(v, p.x, p.layer, p.dy, exec);
        volatile T sink = g.dA.data()[0];
        (void)sink;
    };
}

template <typename T>
std::vector<TimingStats> time_variants_locked(const std::vector<VariantId>& vs, const ShapeConfig& c,
                                              const BenchConfig& cfg) {
    const Problem<T> p = make_problem<T>(c, cfg.seed);
    const Exec exec{nullptr, cfg.single_thread ? 1u : 0u};
    std::vector<std::function<void()>> bodies;
    for (VariantId v : vs) bodies.push_back(variant_body(v, p, exec));
    const double res = clock_resolution_ns();
    std::vector<TimingStats> out;
    for (auto& s : time_bodies(bodies, cfg)) out.push_back(summarize(std::move(s), res));
    return out;
}

// Times several variants at one shape; caller holds the session.
inline std::vector<TimingStats> time_variants(const std::vector<VariantId>& vs, const ShapeConfig& c,
                                              const BenchConfig& cfg) {
    cfg.validate();
    return cfg.precision == Precision::high ? time_variants_locked<double>(vs, c, cfg)
                                            : time_variants_locked<float>(vs, c, cfg);
}

} // namespace detail

/// Median/mean/std/min of `repeat_iters` timed runs of one variant, after
/// `warmup_iters` discarded runs. Operand setup is outside the timed region.
inline TimingStats time_variant(VariantId v, const ShapeConfig& c, const BenchConfig& cfg) {
    MeasurementSession session;
    return detail::time_variants({v}, c, cfg).front();
}

struct SpeedupReport {
    ShapeConfig shape;
    VariantId forward_choice;
    VariantId backward_choice;
    TimingStats plan;
    TimingStats baseline;
    /// (baseline - plan) / baseline * 100 on medians.
    double measured_speedup_percent;
    /// Same formula on cost-model FLOP totals.
    double predicted_speedup_percent;
    Count plan_flops;
    Count baseline_flops;
    Count activation_elements_saved;
};

inline double speedup_percent(double baseline, double candidate) {
    return (baseline - candidate) / baseline * 100.0;
}

namespace detail {

template <typename T>
std::pair<TimingStats, TimingStats> time_plan_vs_baseline(const PairPlan& plan, const BenchConfig& cfg) {
    const Problem<T> p = make_problem<T>(plan.shape, cfg.seed);
    const Exec exec{nullptr, cfg.single_thread ? 1u : 0u};
    std::vector<std::function<void()>> bodies{
        [&] {
            const auto y = forward(plan.forward_choice, p.x, p.layer, exec);
            const auto g = backward(plan.backward_choice, p.x, p.layer, p.dy, exec);
            volatile T sink = y.data()[0] + g.dA.data()[0];
            (void)sink;
        },
        [&] {
            const auto fwd = baseline_forward(p.x, p.layer, exec);
            const auto g = baseline_backward(p.x, p.layer, p.dy, fwd.xa, exec);
            volatile T sink = fwd.y.data()[0] + g.dA.data()[0];
            (void)sink;
        }};
    const double res = clock_resolution_ns();
    auto samples = time_bodies(bodies, cfg);
    return {summarize(std::move(samples[0]), res), summarize(std::move(samples[1]), res)};
}

} // namespace detail

/// Times one forward+backward loop of the plan (no cached intermediates)
/// against the cache-XA baseline and reports measured and FLOP-predicted
/// speedups side by side.
inline SpeedupReport compare_to_baseline(const ShapeConfig& c, const PairPlan& plan, const BenchConfig& cfg) {
    cfg.validate();
    if (!(plan.shape == c)) throw ShapeError("plan was made for " + plan.shape.to_string());
    if (!is_executable(plan.forward_choice) || !is_executable(plan.backward_choice))
        throw UnsupportedVariantError("plan is not executable");
    MeasurementSession session;
    auto [ps, bs] = cfg.precision == Precision::high ? detail::time_plan_vs_baseline<double>(plan, cfg)
                                                     : detail::time_plan_vs_baseline<float>(plan, cfg);
    const BaselineCosts base = baseline_costs(c);
    const Count base_total = checked::add(base.forward_flops, base.backward_flops);
    const Count plan_total = plan.total_flops();
    SpeedupReport rep{c,
                      plan.forward_choice,
                      plan.backward_choice,
                      ps,
                      bs,
                      speedup_percent(bs.median_ns, ps.median_ns),
                      speedup_percent(double(base_total), double(plan_total)),
                      plan_total,
                      base_total,
                      base.saved_activation_elements};
    return rep;
}

} // namespace lorachain
