#include <gtest/gtest.h>

#include "lorachain/json.hpp"

using namespace lorachain;

TEST(Json, CostReportCarriesExactCounts) {
    const auto j = to_json(cost_report(ShapeConfig(2, 100, 512, 512, 32)));
    EXPECT_EQ(j["flops"]["forward1"].get<Count>(), 117'964'800u);
    EXPECT_EQ(j["flops"]["forward2"].get<Count>(), 121'634'816u);
    EXPECT_EQ(j["flops"]["backward1"].get<Count>(), 137'625'600u);
    EXPECT_EQ(j["flops"]["backward4"].get<Count>(), 260'046'848u);
    EXPECT_EQ(j["flops"].size(), 10u);
    EXPECT_FALSE(j["workspace_elements"].contains("backward6"));
    EXPECT_EQ(j["shape"]["r"], 32);
}

TEST(Json, PlanRoundTrip) {
    const auto plan = select_by_flops(ShapeConfig(7, 13, 300, 900, 24));
    const auto j = to_json(plan);
    EXPECT_EQ(j["total_flops"].get<Count>(), plan.total_flops());
    const auto back = plan_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(back.shape, plan.shape);
}

TEST(Json, PlanRoundTripWithTiming) {
    auto plan = select_by_flops(ShapeConfig(1, 2, 3, 4, 1));
    TimingStats t{1.5, 2.0, 0.25, 1.0, 5, 30.0, std::string("coarse clock")};
    plan.criterion = Criterion::time;
    plan.evidence[0].timing = t;
    const auto back = plan_from_json(to_json(plan));
    ASSERT_TRUE(back.evidence[0].timing);
    EXPECT_EQ(back.evidence[0].timing->median_ns, 1.5);
    EXPECT_EQ(back.evidence[0].timing->warning, "coarse clock");
    EXPECT_FALSE(back.evidence[1].timing);
    EXPECT_EQ(back.criterion, Criterion::time);
}

TEST(Json, RejectsUnknownNames) {
    auto j = to_json(select_by_flops(ShapeConfig(1, 1, 4, 4, 1)));
    j["forward_choice"] = "F9";
    EXPECT_THROW(plan_from_json(j), Error);
    j = to_json(select_by_flops(ShapeConfig(1, 1, 4, 4, 1)));
    j["criterion"] = "vibes";
    EXPECT_THROW(plan_from_json(j), Error);
}
