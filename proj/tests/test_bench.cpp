#include <gtest/gtest.h>

#include <future>

#include "lorachain/bench.hpp"
#include "lorachain/selector.hpp"

using namespace lorachain;
using V = VariantId;

namespace {

BenchConfig quick(std::size_t repeats = 5) {
    BenchConfig cfg;
    cfg.warmup_iters = 1;
    cfg.repeat_iters = repeats;
    cfg.seed = 3;
    return cfg;
}

} // namespace

TEST(BenchConfig, RequiresThreeRepeats) {
    BenchConfig cfg;
    cfg.repeat_iters = 2;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(time_variant(V::F1, ShapeConfig(1, 1, 2, 2, 1), cfg), std::invalid_argument);
}

TEST(TimeVariant, SampleCountAndStatsInvariants) {
    const auto st = time_variant(V::B3, ShapeConfig(2, 8, 16, 16, 4), quick(5));
    EXPECT_EQ(st.samples, 5u);
    EXPECT_GT(st.min_ns, 0.0);
    EXPECT_LE(st.min_ns, st.median_ns);
    EXPECT_LE(st.median_ns, st.mean_ns + 3 * st.std_ns);
    EXPECT_GT(st.clock_resolution_ns, 0.0);
}

TEST(TimeVariant, RejectsCostModelOnlyVariants) {
    EXPECT_THROW(time_variant(V::B7, ShapeConfig(1, 1, 2, 2, 1), quick()), UnsupportedVariantError);
}

TEST(TimeVariant, HighPrecisionWorks) {
    auto cfg = quick();
    cfg.precision = Precision::high;
    EXPECT_EQ(time_variant(V::F2, ShapeConfig(1, 4, 8, 8, 2), cfg).samples, 5u);
}

TEST(Summarize, KnownSamples) {
    const auto st = summarize({4.0, 1.0, 3.0, 2.0}, 0.001);
    EXPECT_EQ(st.min_ns, 1.0);
    EXPECT_EQ(st.median_ns, 2.5);
    EXPECT_EQ(st.mean_ns, 2.5);
    EXPECT_NEAR(st.std_ns, std::sqrt(5.0 / 3.0), 1e-12);
    EXPECT_FALSE(st.warning);
    EXPECT_TRUE(summarize({10.0, 10.0, 10.0}, 1.0).warning); // resolution > median/100
    EXPECT_THROW(summarize({}, 1.0), MeasurementError);
}

TEST(Problem, SameSeedSameOperands) {
    const ShapeConfig c(2, 3, 5, 4, 2);
    const auto a = make_problem<float>(c, 17);
    const auto b = make_problem<float>(c, 17);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.layer.w(), b.layer.w());
    EXPECT_EQ(a.layer.a(), b.layer.a());
    EXPECT_EQ(a.layer.b(), b.layer.b());
    EXPECT_EQ(a.dy, b.dy);
    EXPECT_NE(a.x, make_problem<float>(c, 18).x);
    EXPECT_EQ(a.x.rows(), 6u);
}

TEST(MeasurementSession, RejectsConcurrentSession) {
    MeasurementSession held;
    EXPECT_THROW(MeasurementSession{}, MeasurementError);
    auto fut = std::async(std::launch::async, [] {
        return time_variant(V::F1, ShapeConfig(1, 1, 2, 2, 1), quick());
    });
    EXPECT_THROW(fut.get(), MeasurementError);
}

TEST(CompareToBaseline, SelfComparisonReportsBothNumbers) {
    const ShapeConfig c(2, 100, 512, 512, 32);
    auto plan = select_by_flops(c);
    plan.forward_choice = V::F1;
    plan.backward_choice = V::B1;
    const auto rep = compare_to_baseline(c, plan, quick(3));
    EXPECT_EQ(rep.plan_flops, 255'590'400u);
    EXPECT_EQ(rep.baseline_flops, 249'036'800u);
    EXPECT_DOUBLE_EQ(rep.predicted_speedup_percent,
                     (249'036'800.0 - 255'590'400.0) / 249'036'800.0 * 100.0);
    EXPECT_LT(rep.predicted_speedup_percent, 0.0);
    EXPECT_EQ(rep.plan.samples, 3u);
    EXPECT_EQ(rep.baseline.samples, 3u);
    EXPECT_TRUE(std::isfinite(rep.measured_speedup_percent));
    EXPECT_EQ(rep.activation_elements_saved, 200u * 32);
}

TEST(CompareToBaseline, RejectsMismatchedPlan) {
    const auto plan = select_by_flops(ShapeConfig(1, 1, 4, 4, 1));
    EXPECT_THROW(compare_to_baseline(ShapeConfig(1, 1, 4, 4, 2), plan, quick()), ShapeError);
}
